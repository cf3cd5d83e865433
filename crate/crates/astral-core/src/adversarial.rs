//! Two-round adversarial training step.
//!
//! Round 1 runs the plain forward pass, takes the loss gradient at the
//! selected intermediate variables (the outputs of the two gated blocks),
//! and accumulates the primal parameter gradients. Round 2 rebuilds the
//! forward path from the earliest selected variable with the perturbation
//! `r = ε · X ⊗ d/‖d‖₂` added (X the variable's value, d its round-1 loss
//! gradient, the norm taken over the whole tensor per sentence), then
//! accumulates the adversarial parameter gradients on top. The perturbation
//! is treated as a constant in round 2; the optimizer sees the gradient of
//! `L_pri + L_adv`.

use crate::data::Sentence;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Injection points for perturbations. The registry names are the stable
/// config-facing identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdvTarget {
    /// Output of gated block I (the Bi-LSTM input).
    #[serde(rename = "E_prime")]
    EPrime,
    /// Output of gated block II (the CRF input).
    #[serde(rename = "H_prime")]
    HPrime,
}

impl AdvTarget {
    pub fn name(self) -> &'static str {
        match self {
            AdvTarget::EPrime => "E_prime",
            AdvTarget::HPrime => "H_prime",
        }
    }

    pub fn parse(s: &str) -> Result<AdvTarget> {
        match s {
            "E_prime" => Ok(AdvTarget::EPrime),
            "H_prime" => Ok(AdvTarget::HPrime),
            other => Err(Error::Config(format!(
                "unknown adversarial target {other:?}; valid targets: {}",
                target_registry().join(", ")
            ))),
        }
    }
}

/// Names of every perturbable variable the model exposes.
pub fn target_registry() -> Vec<&'static str> {
    vec![AdvTarget::EPrime.name(), AdvTarget::HPrime.name()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvConfig {
    /// Perturbation scale ε.
    pub epsilon: f64,
    pub targets: Vec<AdvTarget>,
    /// Gradient norms at or below this floor produce a zero perturbation
    /// instead of dividing by ~0.
    pub norm_floor: f64,
}

impl Default for AdvConfig {
    fn default() -> AdvConfig {
        AdvConfig {
            epsilon: 0.05,
            targets: vec![AdvTarget::EPrime, AdvTarget::HPrime],
            norm_floor: 1e-12,
        }
    }
}

impl AdvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon < 0.0 || !self.epsilon.is_finite() {
            return Err(Error::Config(format!("epsilon must be finite and >= 0, got {}", self.epsilon)));
        }
        if self.targets.is_empty() {
            return Err(Error::Config(
                "adversarial training enabled with an empty target list".into(),
            ));
        }
        Ok(())
    }

    fn has(&self, t: AdvTarget) -> bool {
        self.targets.contains(&t)
    }
}

/// One adversarial step's bookkeeping. `total_loss` is computed as
/// `primal_loss + adversarial_loss` in exactly that order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdvStepRecord {
    pub primal_loss: f64,
    pub adversarial_loss: f64,
    pub total_loss: f64,
    /// `(target name, ‖r‖₂)` for each active target.
    pub perturbation_norms: Vec<(String, f64)>,
}

/// `r = ε · X ⊗ d/‖d‖₂`, or zero when `‖d‖₂ ≤ norm_floor`.
pub fn compute_r_adv(x: &Tensor, d: &Tensor, epsilon: f64, norm_floor: f64) -> Result<Tensor> {
    if x.shape() != d.shape() {
        return Err(Error::dim("compute_r_adv", x.shape(), d.shape()));
    }
    let norm = d.l2_norm();
    if norm <= norm_floor {
        return Ok(Tensor::zeros(x.shape()));
    }
    let mut r = x.mul(d)?;
    let scale = epsilon / norm;
    for v in r.data_mut() {
        *v *= scale;
    }
    Ok(r)
}

/// Run one two-round adversarial step; gradients of `L_pri + L_adv`
/// accumulate into the model (the caller zeroes them beforehand).
pub fn adversarial_step(
    model: &mut Model,
    sentence: &Sentence,
    cfg: &AdvConfig,
) -> Result<AdvStepRecord> {
    cfg.validate()?;
    let gold = sentence
        .gold_tags
        .clone()
        .ok_or_else(|| Error::Argument("adversarial step on a sentence without gold tags".into()))?;

    // Round 1: primal forward/backward, capturing values and gradients at
    // the injection points.
    let e = model.stage_embed(sentence)?;
    let e_prime = model.stage_gc1(&e)?;
    let h = model.stage_bilstm(&e_prime)?;
    let h_prime = model.stage_gc2(&h)?;
    let primal_loss = model.stage_loss(&h_prime, &gold)?;
    if !primal_loss.is_finite() {
        return Err(Error::Numeric(format!(
            "primal loss {primal_loss} on a {}-token sentence",
            sentence.len()
        )));
    }
    let d_h_prime = model.stage_loss_backward(1.0)?;
    let d_h = model.stage_gc2_backward(&d_h_prime)?;
    let d_e_prime = model.stage_bilstm_backward(&d_h)?;
    let d_e = model.stage_gc1_backward(&d_e_prime)?;
    model.stage_embed_backward(&d_e)?;

    // Round 2: re-run from the earliest target with perturbations injected.
    // The blocks before the earliest target keep their round-1 caches, so
    // the adversarial backward still reaches their parameters.
    let mut perturbation_norms = Vec::new();
    let h_prime_fresh;
    if cfg.has(AdvTarget::EPrime) {
        let r_e = compute_r_adv(&e_prime, &d_e_prime, cfg.epsilon, cfg.norm_floor)?;
        perturbation_norms.push((AdvTarget::EPrime.name().to_string(), r_e.l2_norm()));
        let e_prime_adv = e_prime.add(&r_e)?;
        let h_adv = model.stage_bilstm(&e_prime_adv)?;
        h_prime_fresh = model.stage_gc2(&h_adv)?;
    } else {
        h_prime_fresh = h_prime;
    }
    let h_prime_adv = if cfg.has(AdvTarget::HPrime) {
        let r_h = compute_r_adv(&h_prime_fresh, &d_h_prime, cfg.epsilon, cfg.norm_floor)?;
        perturbation_norms.push((AdvTarget::HPrime.name().to_string(), r_h.l2_norm()));
        h_prime_fresh.add(&r_h)?
    } else {
        h_prime_fresh
    };

    let adversarial_loss = model.stage_loss(&h_prime_adv, &gold)?;
    if !adversarial_loss.is_finite() {
        return Err(Error::Numeric(format!(
            "adversarial loss {adversarial_loss} (primal {primal_loss}, epsilon {})",
            cfg.epsilon
        )));
    }
    let d_h_prime2 = model.stage_loss_backward(1.0)?;
    let d_h2 = model.stage_gc2_backward(&d_h_prime2)?;
    let d_e_prime2 = model.stage_bilstm_backward(&d_h2)?;
    let d_e2 = model.stage_gc1_backward(&d_e_prime2)?;
    model.stage_embed_backward(&d_e2)?;

    let total_loss = primal_loss + adversarial_loss;
    Ok(AdvStepRecord {
        primal_loss,
        adversarial_loss,
        total_loss,
        perturbation_norms,
    })
}
