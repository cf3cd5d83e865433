//! Linear-chain CRF: emission projection from the feature columns, learned
//! transition/boundary scores, exact log-partition via the forward algorithm,
//! sequence negative log-likelihood with forward-backward gradients, and
//! Viterbi decoding.
//!
//! A path `y` over `n` tokens scores
//! `start[y_0] + Σ e[i][y_i] + Σ T[y_i][y_{i+1}] + end[y_{n-1}]`,
//! and all sums over paths run in log space with max-shifted log-sum-exp.

use crate::data::TagSet;
use crate::error::{Error, Result};
use crate::layer::{Layer, LayerParams, ParamEntry};
use crate::rng::Rng;
use crate::tensor::{init, InitScheme, Tensor};

/// Sentinel for forbidden transitions: large enough to silence a path,
/// small enough to keep log-sum-exp exact in f64.
pub const PIN_SCORE: f64 = -1e4;

/// Per-token tag scores, one row per token.
#[derive(Debug, Clone)]
pub struct Emissions {
    /// `n × L`.
    pub scores: Tensor,
}

impl Emissions {
    pub fn num_tokens(&self) -> usize {
        self.scores.shape()[0]
    }

    pub fn num_tags(&self) -> usize {
        self.scores.shape()[1]
    }
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

struct CrfCache {
    input: Tensor,
    scores: Tensor,
    alpha: Tensor,
    log_z: f64,
    gold: Option<Vec<usize>>,
}

pub struct Crf {
    params: LayerParams,
    num_tags: usize,
    input_dim: usize,
    pinned: Vec<(&'static str, usize)>,
    /// Gold tags used when the CRF is driven through the [`Layer`] contract.
    gold: Option<Vec<usize>>,
    cache: Option<CrfCache>,
}

impl Crf {
    pub fn new(input_dim: usize, num_tags: usize, rng: &mut Rng) -> Result<Crf> {
        if input_dim == 0 || num_tags == 0 {
            return Err(Error::Config("crf dimensions must be >= 1".into()));
        }
        let mut params = LayerParams::new();
        params.add("projection", init(&[num_tags, input_dim], InitScheme::ScaledUniform, rng))?;
        params.add("proj_bias", Tensor::zeros(&[num_tags]))?;
        params.add("transitions", init(&[num_tags, num_tags], InitScheme::Uniform { lo: -0.1, hi: 0.1 }, rng))?;
        params.add("start", init(&[num_tags], InitScheme::Uniform { lo: -0.1, hi: 0.1 }, rng))?;
        params.add("end", init(&[num_tags], InitScheme::Uniform { lo: -0.1, hi: 0.1 }, rng))?;
        Ok(Crf {
            params,
            num_tags,
            input_dim,
            pinned: Vec::new(),
            gold: None,
            cache: None,
        })
    }

    pub fn num_tags(&self) -> usize {
        self.num_tags
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn params(&self) -> &LayerParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut LayerParams {
        &mut self.params
    }

    pub fn transitions(&self) -> &Tensor {
        &self.params.entry("transitions").value
    }

    pub fn start_scores(&self) -> &Tensor {
        &self.params.entry("start").value
    }

    pub fn end_scores(&self) -> &Tensor {
        &self.params.entry("end").value
    }

    /// Gold sequence consulted by [`Layer::forward`].
    pub fn set_gold(&mut self, gold: Vec<usize>) {
        self.gold = Some(gold);
    }

    /// Project feature columns (`d × n`) to emission scores (`n × L`) and
    /// cache the input for the backward passes.
    pub fn emissions(&mut self, input: &Tensor) -> Result<Emissions> {
        let (d, n) = input.dims2()?;
        if d != self.input_dim {
            return Err(Error::dim("crf emissions", input.shape(), &[self.input_dim, 0]));
        }
        let proj = &self.params.entry("projection").value;
        let bias = &self.params.entry("proj_bias").value;
        let mut scores = Tensor::zeros(&[n, self.num_tags]);
        for i in 0..n {
            for t in 0..self.num_tags {
                let mut acc = bias.data()[t];
                for dd in 0..d {
                    acc += proj.at2(t, dd) * input.at2(dd, i);
                }
                scores.set2(i, t, acc);
            }
        }
        self.cache = Some(CrfCache {
            input: input.clone(),
            scores: scores.clone(),
            alpha: Tensor::zeros(&[1]),
            log_z: f64::NAN,
            gold: None,
        });
        Ok(Emissions { scores })
    }

    /// Backward through the emission projection only (no chain scores);
    /// pairs with [`Crf::emissions`].
    pub fn emissions_backward(&mut self, grad_scores: &Tensor) -> Result<Tensor> {
        let cache = self.cache.as_ref().ok_or(Error::State { layer: "Crf" })?;
        let input = cache.input.clone();
        let (d, n) = input.dims2()?;
        if grad_scores.shape() != [n, self.num_tags] {
            return Err(Error::dim("crf emissions backward", grad_scores.shape(), &[n, self.num_tags]));
        }
        {
            let pg = &mut self.params.entry_mut("projection").grad;
            for t in 0..self.num_tags {
                for dd in 0..d {
                    let mut acc = 0.0;
                    for i in 0..n {
                        acc += grad_scores.at2(i, t) * input.at2(dd, i);
                    }
                    pg.add2(t, dd, acc);
                }
            }
        }
        {
            let mut sums = vec![0.0; self.num_tags];
            for (t, slot) in sums.iter_mut().enumerate() {
                for i in 0..n {
                    *slot += grad_scores.at2(i, t);
                }
            }
            let bg = &mut self.params.entry_mut("proj_bias").grad;
            for (slot, inc) in bg.data_mut().iter_mut().zip(&sums) {
                *slot += inc;
            }
        }
        let proj = &self.params.entry("projection").value;
        let mut grad_input = Tensor::zeros(&[d, n]);
        for dd in 0..d {
            for i in 0..n {
                let mut acc = 0.0;
                for t in 0..self.num_tags {
                    acc += proj.at2(t, dd) * grad_scores.at2(i, t);
                }
                grad_input.set2(dd, i, acc);
            }
        }
        Ok(grad_input)
    }

    fn forward_alpha(&self, scores: &Tensor) -> (Tensor, f64) {
        let n = scores.shape()[0];
        let l = self.num_tags;
        let trans = self.transitions();
        let start = self.start_scores();
        let end = self.end_scores();
        let mut alpha = Tensor::zeros(&[n, l]);
        for t in 0..l {
            alpha.set2(0, t, start.data()[t] + scores.at2(0, t));
        }
        for i in 1..n {
            for t in 0..l {
                let lse = log_sum_exp((0..l).map(|s| alpha.at2(i - 1, s) + trans.at2(s, t)));
                alpha.set2(i, t, scores.at2(i, t) + lse);
            }
        }
        let log_z = log_sum_exp((0..l).map(|t| alpha.at2(n - 1, t) + end.data()[t]));
        (alpha, log_z)
    }

    fn backward_beta(&self, scores: &Tensor) -> Tensor {
        let n = scores.shape()[0];
        let l = self.num_tags;
        let trans = self.transitions();
        let end = self.end_scores();
        let mut beta = Tensor::zeros(&[n, l]);
        for t in 0..l {
            beta.set2(n - 1, t, end.data()[t]);
        }
        for i in (0..n - 1).rev() {
            for t in 0..l {
                let lse = log_sum_exp(
                    (0..l).map(|s| trans.at2(t, s) + scores.at2(i + 1, s) + beta.at2(i + 1, s)),
                );
                beta.set2(i, t, lse);
            }
        }
        beta
    }

    /// Log of the sum over all `Lⁿ` tag paths of `exp(path score)`.
    pub fn log_partition(&self, emissions: &Emissions) -> f64 {
        self.forward_alpha(&emissions.scores).1
    }

    /// Score of one explicit path.
    pub fn path_score(&self, emissions: &Emissions, path: &[usize]) -> f64 {
        let n = emissions.num_tokens();
        assert_eq!(path.len(), n);
        let trans = self.transitions();
        let mut score = self.start_scores().data()[path[0]] + emissions.scores.at2(0, path[0]);
        for i in 1..n {
            score += trans.at2(path[i - 1], path[i]) + emissions.scores.at2(i, path[i]);
        }
        score + self.end_scores().data()[path[n - 1]]
    }

    fn check_gold(&self, n: usize, gold: &[usize]) -> Result<()> {
        if gold.len() != n {
            return Err(Error::Argument(format!(
                "gold length {} does not match {} tokens",
                gold.len(),
                n
            )));
        }
        if let Some(&bad) = gold.iter().find(|&&g| g >= self.num_tags) {
            return Err(Error::Argument(format!(
                "gold tag id {bad} out of range [0, {})",
                self.num_tags
            )));
        }
        Ok(())
    }

    /// Negative log-likelihood of `gold` under the path distribution.
    /// Requires a prior [`Crf::emissions`] call; the quantities needed by
    /// [`Crf::loss_backward`] are cached.
    pub fn nll(&mut self, emissions: &Emissions, gold: &[usize]) -> Result<f64> {
        let n = emissions.num_tokens();
        self.check_gold(n, gold)?;
        let (alpha, log_z) = self.forward_alpha(&emissions.scores);
        // log Z ≥ gold score holds exactly in real arithmetic; the two sums
        // round differently, so clamp the ulp-scale negative residue.
        let nll = (log_z - self.path_score(emissions, gold)).max(0.0);
        if let Some(cache) = self.cache.as_mut() {
            cache.scores = emissions.scores.clone();
            cache.alpha = alpha;
            cache.log_z = log_z;
            cache.gold = Some(gold.to_vec());
        }
        Ok(nll)
    }

    /// Emission projection plus NLL in one call, for the training pipeline.
    pub fn loss_forward(&mut self, input: &Tensor, gold: &[usize]) -> Result<f64> {
        let emissions = self.emissions(input)?;
        self.nll(&emissions, gold)
    }

    /// Backward of `scale · nll` through chain scores and the emission
    /// projection. Accumulates parameter gradients and returns the gradient
    /// with respect to the projected input columns.
    pub fn loss_backward(&mut self, scale: f64) -> Result<Tensor> {
        let cache = self.cache.as_ref().ok_or(Error::State { layer: "Crf" })?;
        let gold = cache
            .gold
            .clone()
            .ok_or(Error::State { layer: "Crf (nll not computed)" })?;
        let scores = cache.scores.clone();
        let alpha = cache.alpha.clone();
        let log_z = cache.log_z;
        let n = scores.shape()[0];
        let l = self.num_tags;
        let beta = self.backward_beta(&scores);

        // token marginals minus gold indicators → emission-score gradient
        let mut grad_scores = Tensor::zeros(&[n, l]);
        for i in 0..n {
            for t in 0..l {
                let marginal = (alpha.at2(i, t) + beta.at2(i, t) - log_z).exp();
                let indicator = if gold[i] == t { 1.0 } else { 0.0 };
                grad_scores.set2(i, t, scale * (marginal - indicator));
            }
        }

        // Boundary and transition gradients. Each stored coordinate receives
        // exactly one addition per backward call (expected counts are summed
        // locally first), keeping repeated backwards exactly additive.
        {
            let trans_inc = {
                let trans = self.transitions();
                let mut inc = Tensor::zeros(&[l, l]);
                for s in 0..l {
                    for t in 0..l {
                        let mut expected = 0.0;
                        for i in 0..n - 1 {
                            expected += (alpha.at2(i, s)
                                + trans.at2(s, t)
                                + scores.at2(i + 1, t)
                                + beta.at2(i + 1, t)
                                - log_z)
                                .exp();
                        }
                        let mut observed = 0.0;
                        for i in 0..n - 1 {
                            if gold[i] == s && gold[i + 1] == t {
                                observed += 1.0;
                            }
                        }
                        inc.set2(s, t, scale * (expected - observed));
                    }
                }
                inc
            };
            {
                let sg = &mut self.params.entry_mut("start").grad;
                for t in 0..l {
                    let marginal = (alpha.at2(0, t) + beta.at2(0, t) - log_z).exp();
                    let indicator = if gold[0] == t { 1.0 } else { 0.0 };
                    sg.data_mut()[t] += scale * (marginal - indicator);
                }
            }
            {
                let eg = &mut self.params.entry_mut("end").grad;
                for t in 0..l {
                    let marginal = (alpha.at2(n - 1, t) + beta.at2(n - 1, t) - log_z).exp();
                    let indicator = if gold[n - 1] == t { 1.0 } else { 0.0 };
                    eg.data_mut()[t] += scale * (marginal - indicator);
                }
            }
            self.params
                .entry_mut("transitions")
                .grad
                .add_assign(&trans_inc)?;
        }

        self.emissions_backward(&grad_scores)
    }

    /// Token marginals `P(y_i = t)` as an `n × L` tensor.
    pub fn marginals(&self, emissions: &Emissions) -> Tensor {
        let (alpha, log_z) = self.forward_alpha(&emissions.scores);
        let beta = self.backward_beta(&emissions.scores);
        let n = emissions.num_tokens();
        let l = self.num_tags;
        let mut m = Tensor::zeros(&[n, l]);
        for i in 0..n {
            for t in 0..l {
                m.set2(i, t, (alpha.at2(i, t) + beta.at2(i, t) - log_z).exp());
            }
        }
        m
    }

    /// Exact argmax path. Ties break toward the lower tag index at every
    /// backpointer decision and at the final tag.
    pub fn viterbi_decode(&self, emissions: &Emissions) -> (Vec<usize>, f64) {
        let scores = &emissions.scores;
        let n = emissions.num_tokens();
        let l = self.num_tags;
        let trans = self.transitions();
        let start = self.start_scores();
        let end = self.end_scores();

        let mut delta = Tensor::zeros(&[n, l]);
        let mut backptr = vec![vec![0usize; l]; n];
        for t in 0..l {
            delta.set2(0, t, start.data()[t] + scores.at2(0, t));
        }
        for i in 1..n {
            for t in 0..l {
                let mut best_s = 0;
                let mut best = delta.at2(i - 1, 0) + trans.at2(0, t);
                for s in 1..l {
                    let cand = delta.at2(i - 1, s) + trans.at2(s, t);
                    if cand > best {
                        best = cand;
                        best_s = s;
                    }
                }
                delta.set2(i, t, scores.at2(i, t) + best);
                backptr[i][t] = best_s;
            }
        }
        let mut best_t = 0;
        let mut best = delta.at2(n - 1, 0) + end.data()[0];
        for t in 1..l {
            let cand = delta.at2(n - 1, t) + end.data()[t];
            if cand > best {
                best = cand;
                best_t = t;
            }
        }
        let mut path = vec![0usize; n];
        path[n - 1] = best_t;
        for i in (1..n).rev() {
            path[i - 1] = backptr[i][path[i]];
        }
        (path, best)
    }

    /// Pin the scores of IOB-impossible events to [`PIN_SCORE`]: starting on
    /// an inside tag, and entering "I-X" from anything other than "B-X" or
    /// "I-X". Pinned coordinates are excluded from optimizer updates via
    /// [`Crf::zero_pinned_grads`].
    pub fn apply_iob_constraints(&mut self, tagset: &TagSet) -> Result<()> {
        if tagset.len() != self.num_tags {
            return Err(Error::Config(format!(
                "tag set of {} tags does not match CRF with {}",
                tagset.len(),
                self.num_tags
            )));
        }
        self.pinned.clear();
        let l = self.num_tags;
        let mut pins: Vec<(&'static str, usize)> = Vec::new();
        for to in 0..l {
            if !tagset.is_inside(to) {
                continue;
            }
            let ty = tagset.entity_type_of(to);
            pins.push(("start", to));
            for from in 0..l {
                let compatible = (tagset.is_begin(from) || tagset.is_inside(from))
                    && tagset.entity_type_of(from) == ty;
                if !compatible {
                    pins.push(("transitions", from * l + to));
                }
            }
        }
        for &(name, idx) in &pins {
            self.params.entry_mut(name).value.data_mut()[idx] = PIN_SCORE;
        }
        self.pinned = pins;
        Ok(())
    }

    pub fn pinned_coords(&self) -> &[(&'static str, usize)] {
        &self.pinned
    }

    /// Clear gradients at pinned coordinates so the optimizer leaves the
    /// sentinel values untouched.
    pub fn zero_pinned_grads(&mut self) {
        for &(name, idx) in &self.pinned {
            self.params.entry_mut(name).grad.data_mut()[idx] = 0.0;
        }
    }
}

impl Layer for Crf {
    /// Emission projection followed by the NLL of the configured gold
    /// sequence (see [`Crf::set_gold`]); output is the loss as a 1-element
    /// tensor.
    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let gold = self
            .gold
            .clone()
            .ok_or_else(|| Error::Argument("Crf layer forward: no gold sequence set".into()))?;
        let loss = self.loss_forward(input, &gold)?;
        Ok(Tensor::scalar(loss))
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        if grad_output.len() != 1 {
            return Err(Error::dim("crf backward", grad_output.shape(), &[1]));
        }
        self.loss_backward(grad_output.data()[0])
    }

    fn param_count(&self) -> usize {
        self.params.len()
    }

    fn param(&self, i: usize) -> &ParamEntry {
        self.params.at(i)
    }

    fn param_mut(&mut self, i: usize) -> &mut ParamEntry {
        self.params.at_mut(i)
    }
}

/// [`Layer`] view of the emission projection alone (scores out, no chain),
/// so the projection can be gradient-checked in isolation.
pub struct EmissionProbe {
    pub crf: Crf,
}

impl Layer for EmissionProbe {
    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        Ok(self.crf.emissions(input)?.scores)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        self.crf.emissions_backward(grad_output)
    }

    fn param_count(&self) -> usize {
        self.crf.param_count()
    }

    fn param(&self, i: usize) -> &ParamEntry {
        self.crf.param(i)
    }

    fn param_mut(&mut self, i: usize) -> &mut ParamEntry {
        self.crf.param_mut(i)
    }
}
