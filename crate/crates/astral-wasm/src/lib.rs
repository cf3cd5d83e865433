//! Browser demo bindings.
//!
//! Wraps the stepwise trainer over the built-in synthetic corpus (40 train /
//! 10 dev sentences) so a page can train incrementally, plot the loss and F1
//! curves, and tag free-form sentences with the model as it learns. All
//! exported methods exchange plain JSON strings; the page does the drawing.

use astral_core::adversarial::{AdvConfig, AdvTarget};
use astral_core::data::Sentence;
use astral_core::model::ModelConfig;
use astral_core::synth;
use astral_core::train::{EpochRecord, TrainConfig, Trainer};
use wasm_bindgen::prelude::*;

fn demo_config(seed: u64, use_gc: bool, use_at: bool, epsilon: f64) -> TrainConfig {
    TrainConfig {
        epochs: 200,
        learning_rate: 0.05,
        momentum: 0.5,
        seed,
        early_stop_patience: 25,
        use_at,
        adv: AdvConfig {
            epsilon,
            targets: vec![AdvTarget::EPrime, AdvTarget::HPrime],
            norm_floor: 1e-12,
        },
        model: ModelConfig {
            word_dim: 16,
            feat_dim: 8,
            hidden_dim: 12,
            use_gc,
            ..ModelConfig::default()
        },
        ..TrainConfig::default()
    }
}

/// One training session over the synthetic corpus.
#[wasm_bindgen]
pub struct Demo {
    trainer: Trainer,
    history: Vec<EpochRecord>,
}

#[wasm_bindgen]
impl Demo {
    /// Fresh session; `use_gc`/`use_at` select the ablation condition and
    /// `epsilon` scales the adversarial perturbation.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, use_gc: bool, use_at: bool, epsilon: f64) -> Result<Demo, JsError> {
        let (train_corpus, dev_corpus) =
            synth::train_dev_split(42, 50, 40).map_err(|e| JsError::new(&e.to_string()))?;
        let config = demo_config(seed as u64, use_gc, use_at, epsilon);
        let trainer = Trainer::new(config, train_corpus, dev_corpus, None)
            .map_err(|e| JsError::new(&e.to_string()))?;
        Ok(Demo {
            trainer,
            history: Vec::new(),
        })
    }

    /// Run up to `n` more epochs (stops at the epoch budget or early stop).
    /// Returns the records of the epochs just run as a JSON array of
    /// `{epoch, train_loss, train_f1, dev_f1}`.
    pub fn train_epochs(&mut self, n: u32) -> Result<String, JsError> {
        let mut fresh = Vec::new();
        for _ in 0..n {
            if self.trainer.finished() {
                break;
            }
            let record = self
                .trainer
                .run_epoch()
                .map_err(|e| JsError::new(&e.to_string()))?;
            fresh.push(record);
        }
        self.history.extend(fresh.iter().cloned());
        serde_json::to_string(&fresh).map_err(|e| JsError::new(&e.to_string()))
    }

    /// Tag one whitespace-tokenized sentence with the current model.
    /// Returns a JSON array of `{token, tag}`.
    pub fn tag(&mut self, sentence: &str) -> Result<String, JsError> {
        let tokens: Vec<String> = sentence.split_whitespace().map(str::to_string).collect();
        if tokens.is_empty() {
            return Ok("[]".to_string());
        }
        let sentence = Sentence::from_raw_tokens(tokens, &self.trainer.model.vocab)
            .map_err(|e| JsError::new(&e.to_string()))?;
        let path = self
            .trainer
            .model
            .decode(&sentence)
            .map_err(|e| JsError::new(&e.to_string()))?;
        let pairs: Vec<serde_json::Value> = sentence
            .tokens
            .iter()
            .zip(&path)
            .map(|(token, &tag)| {
                serde_json::json!({
                    "token": token,
                    "tag": self.trainer.model.tagset.tag(tag),
                })
            })
            .collect();
        serde_json::to_string(&pairs).map_err(|e| JsError::new(&e.to_string()))
    }

    /// All epoch records so far (same shape as `train_epochs`).
    pub fn history(&self) -> Result<String, JsError> {
        serde_json::to_string(&self.history).map_err(|e| JsError::new(&e.to_string()))
    }

    /// Statistics of the training corpus as JSON.
    pub fn corpus_stats(&self) -> Result<String, JsError> {
        let stats = astral_core::data::corpus_stats(self.trainer.train_corpus());
        serde_json::to_string(&stats).map_err(|e| JsError::new(&e.to_string()))
    }

    /// A few sample sentences from the training corpus, one per line.
    pub fn sample_sentences(&self) -> String {
        self.trainer
            .train_corpus()
            .sentences
            .iter()
            .take(5)
            .map(|s| s.tokens.join(" "))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn finished(&self) -> bool {
        self.trainer.finished()
    }

    pub fn epochs_run(&self) -> u32 {
        self.trainer.epochs_run() as u32
    }

    pub fn best_dev_f1(&self) -> f64 {
        let f1 = self.trainer.best_dev_f1();
        if f1.is_finite() {
            f1
        } else {
            0.0
        }
    }
}
