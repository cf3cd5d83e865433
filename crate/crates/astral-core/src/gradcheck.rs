//! Finite-difference sweep across every layer type in the pipeline.
//!
//! Used by the `gradcheck` CLI command and the acceptance suite: each layer
//! is instantiated at small dimensions (≤ 8, sequences ≤ 5) across several
//! seeds and checked with the central-difference probe from
//! [`crate::layer::grad_check`].

use crate::bilstm::{BiLstm, LstmCellProbe};
use crate::crf::{Crf, EmissionProbe};
use crate::data::Vocab;
use crate::embedding::{EmbeddingLayer, EmbeddingTables};
use crate::error::Result;
use crate::gcnn::{Conv1d, GatedCnn, GatedCnnConfig, Glu};
use crate::layer::{grad_check, GradCheckReport, Linear};
use crate::rng::Rng;
use crate::tensor::{init, InitScheme, Tensor};
use std::fmt::Write as _;

#[derive(Debug)]
pub struct LayerCheck {
    pub layer: &'static str,
    pub seed: u64,
    pub report: GradCheckReport,
}

impl LayerCheck {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }
}

fn random_input(shape: &[usize], rng: &mut Rng) -> Tensor {
    init(shape, InitScheme::Uniform { lo: -1.0, hi: 1.0 }, rng)
}

/// Run the finite-difference check for every layer type under each seed.
pub fn check_all_layers(step: f64, tolerance: f64, seeds: &[u64]) -> Result<Vec<LayerCheck>> {
    let mut checks = Vec::new();
    for &seed in seeds {
        let mut rng = Rng::new(seed);

        // embedding scatter (repeated token exercises accumulation)
        {
            let vocab = Vocab::build((0..5).map(|i| format!("t{i}")), 1);
            let tables = EmbeddingTables::new(&vocab, 3, 2, true, None, &mut rng)?;
            let mut layer = EmbeddingLayer::new(tables, vec![1, 4, 1, 2], vec![0, 2, 4, 1]);
            let report = grad_check(&mut layer, &Tensor::zeros(&[1]), step, tolerance)?;
            checks.push(LayerCheck { layer: "embedding", seed, report });
        }
        // 1-D convolution
        {
            let mut layer = Conv1d::new(3, 3, 2, &mut rng)?;
            let x = random_input(&[3, 4], &mut rng);
            let report = grad_check(&mut layer, &x, step, tolerance)?;
            checks.push(LayerCheck { layer: "conv1d", seed, report });
        }
        // gated linear unit
        {
            let mut layer = Glu::new(3, 2, &mut rng)?;
            let x = random_input(&[3, 4], &mut rng);
            let report = grad_check(&mut layer, &x, step, tolerance)?;
            checks.push(LayerCheck { layer: "glu", seed, report });
        }
        // full gated block
        {
            let cfg = GatedCnnConfig {
                input_dim: 3,
                window_size: 3,
                conv_channels: 2,
                gate_dim: 2,
            };
            let mut layer = GatedCnn::new(cfg, &mut rng)?;
            let x = random_input(&[3, 4], &mut rng);
            let report = grad_check(&mut layer, &x, step, tolerance)?;
            checks.push(LayerCheck { layer: "gated-cnn", seed, report });
        }
        // single LSTM cell
        {
            let mut layer = LstmCellProbe::new(2, 2, &mut rng)?;
            let x = random_input(&[6, 1], &mut rng);
            let report = grad_check(&mut layer, &x, step, tolerance)?;
            checks.push(LayerCheck { layer: "lstm-cell", seed, report });
        }
        // bidirectional LSTM over a short sequence
        {
            let mut layer = BiLstm::new(3, 2, &mut rng)?;
            let x = random_input(&[3, 4], &mut rng);
            let report = grad_check(&mut layer, &x, step, tolerance)?;
            checks.push(LayerCheck { layer: "bilstm", seed, report });
        }
        // emission projection in isolation
        {
            let crf = Crf::new(3, 3, &mut rng)?;
            let mut layer = EmissionProbe { crf };
            let x = random_input(&[3, 3], &mut rng);
            let report = grad_check(&mut layer, &x, step, tolerance)?;
            checks.push(LayerCheck { layer: "emission-projection", seed, report });
        }
        // CRF negative log-likelihood
        {
            let mut crf = Crf::new(3, 3, &mut rng)?;
            let gold: Vec<usize> = (0..4).map(|_| rng.below(3)).collect();
            crf.set_gold(gold);
            let x = random_input(&[3, 4], &mut rng);
            let report = grad_check(&mut crf, &x, step, tolerance)?;
            checks.push(LayerCheck { layer: "crf-nll", seed, report });
        }
        // plain linear, the reference for the layer contract
        {
            let w = init(&[3, 4], InitScheme::ScaledUniform, &mut rng);
            let b = init(&[3], InitScheme::Uniform { lo: -0.5, hi: 0.5 }, &mut rng);
            let mut layer = Linear::new(w, b)?;
            let x = random_input(&[4, 2], &mut rng);
            let report = grad_check(&mut layer, &x, step, tolerance)?;
            checks.push(LayerCheck { layer: "linear", seed, report });
        }
    }
    Ok(checks)
}

/// One line per check: layer, seed, coordinates probed, worst error, verdict.
pub fn render_report(checks: &[LayerCheck]) -> String {
    let mut out = String::new();
    for c in checks {
        let _ = writeln!(
            out,
            "{:<20} seed {:<3} {:>5} coords  max rel err {:.3e}  {}",
            c.layer,
            c.seed,
            c.report.coords_checked,
            c.report.max_rel_error,
            if c.passed() { "PASS" } else { "FAIL" }
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whole_suite_passes_across_seeds() {
        let checks = check_all_layers(1e-5, 1e-4, &[0, 1, 2]).unwrap();
        assert_eq!(checks.len(), 27);
        for c in &checks {
            assert!(
                c.passed(),
                "{} (seed {}) failed: max rel err {}",
                c.layer,
                c.seed,
                c.report.max_rel_error
            );
        }
    }
}
