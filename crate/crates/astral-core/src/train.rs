//! Sentence-level SGD training loop with seeded shuffling, inverse-time
//! learning-rate decay, momentum, global gradient clipping, per-epoch dev
//! evaluation, early stopping, best-checkpoint tracking and the four-way
//! ablation harness.

use crate::adversarial::{adversarial_step, AdvConfig};
use crate::checkpoint::Checkpoint;
use crate::data::Corpus;
use crate::embedding::Pretrained;
use crate::error::{Error, Result};
use crate::eval::TokenCounter;
use crate::model::{Model, ModelConfig};
use crate::rng::Rng;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Inverse-time decay: epoch e (0-based) trains at `lr / (1 + decay·e)`.
    pub lr_decay: f64,
    pub momentum: f64,
    pub seed: u64,
    /// Stop after this many dev evaluations without improvement.
    pub early_stop_patience: usize,
    /// Evaluate train/dev F1 every this many epochs.
    pub eval_every: usize,
    /// Global L2 gradient clip, applied once per sentence step.
    pub clip_norm: f64,
    pub use_at: bool,
    pub adv: AdvConfig,
    pub model: ModelConfig,
    pub min_count: usize,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            epochs: 200,
            learning_rate: 0.1,
            lr_decay: 0.05,
            momentum: 0.9,
            seed: 42,
            early_stop_patience: 10,
            eval_every: 1,
            clip_norm: 5.0,
            use_at: true,
            adv: AdvConfig::default(),
            model: ModelConfig::default(),
            min_count: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!("bad learning_rate {}", self.learning_rate)));
        }
        if self.use_at {
            self.adv.validate()?;
        }
        Ok(())
    }
}

/// Adversarial aggregates for one epoch; losses are means per token, the
/// perturbation norms means per sentence step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvEpochStats {
    pub mean_adversarial_loss: f64,
    pub mean_total_loss: f64,
    pub mean_perturbation_norm: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mean primal NLL per token over the epoch.
    pub train_loss: f64,
    pub train_f1: f64,
    pub dev_f1: f64,
    /// Epoch duration in seconds. Excluded from serialized logs so that
    /// same-seed runs produce byte-identical log files.
    #[serde(skip)]
    pub wall_time: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adv: Option<AdvEpochStats>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
    pub best_dev_f1: f64,
    /// Number of adversarial steps taken (0 when adversarial training is
    /// off).
    pub adv_invocations: usize,
    /// Set when training stopped on a non-finite loss; the checkpoint still
    /// holds the best parameters seen before the abort.
    pub aborted: Option<String>,
}

/// Stepwise trainer. [`Trainer::run_epoch`] advances one epoch at a time so
/// callers can interleave their own reporting or stop conditions; [`train`]
/// is the standard driver.
pub struct Trainer {
    pub config: TrainConfig,
    pub model: Model,
    train_corpus: Corpus,
    dev_corpus: Corpus,
    rng: Rng,
    momentum_buffers: Vec<Tensor>,
    order: Vec<usize>,
    epoch: usize,
    best_dev_f1: f64,
    best_snapshot: Option<(Vec<(String, Tensor)>, [u64; 4])>,
    evals_without_improvement: usize,
    stopped_early: bool,
    last_train_f1: f64,
    last_dev_f1: f64,
    pub adv_invocations: usize,
}

impl Trainer {
    pub fn new(
        config: TrainConfig,
        train_corpus: Corpus,
        dev_corpus: Corpus,
        pretrained: Option<&Pretrained>,
    ) -> Result<Trainer> {
        config.validate()?;
        if train_corpus.sentences.is_empty() || dev_corpus.sentences.is_empty() {
            return Err(Error::Argument("training and dev corpora must be non-empty".into()));
        }
        if train_corpus.tagset.tags() != dev_corpus.tagset.tags() {
            return Err(Error::Argument(
                "training and dev corpora must share one tag set".into(),
            ));
        }
        let mut rng = Rng::new(config.seed);
        let model = Model::new(
            config.model.clone(),
            train_corpus.vocab.clone(),
            train_corpus.tagset.clone(),
            pretrained,
            &mut rng,
        )?;
        let mut momentum_buffers = Vec::new();
        let mut m = model;
        m.visit_params(&mut |_, e| momentum_buffers.push(Tensor::zeros(e.value.shape())));
        let order: Vec<usize> = (0..train_corpus.sentences.len()).collect();
        Ok(Trainer {
            config,
            model: m,
            train_corpus,
            dev_corpus,
            rng,
            momentum_buffers,
            order,
            epoch: 0,
            best_dev_f1: f64::NEG_INFINITY,
            best_snapshot: None,
            evals_without_improvement: 0,
            stopped_early: false,
            last_train_f1: 0.0,
            last_dev_f1: 0.0,
            adv_invocations: 0,
        })
    }

    pub fn epochs_run(&self) -> usize {
        self.epoch
    }

    pub fn train_corpus(&self) -> &Corpus {
        &self.train_corpus
    }

    pub fn dev_corpus(&self) -> &Corpus {
        &self.dev_corpus
    }

    pub fn finished(&self) -> bool {
        self.epoch >= self.config.epochs || self.stopped_early
    }

    pub fn best_dev_f1(&self) -> f64 {
        self.best_dev_f1
    }

    fn learning_rate(&self) -> f64 {
        self.config.learning_rate / (1.0 + self.config.lr_decay * self.epoch as f64)
    }

    /// Token-level F1 of Viterbi decoding over one of the two corpora.
    pub fn evaluate(&mut self, which: EvalSplit) -> Result<f64> {
        let corpus = match which {
            EvalSplit::Train => &self.train_corpus,
            EvalSplit::Dev => &self.dev_corpus,
        };
        evaluate_token_f1(&mut self.model, corpus)
    }

    fn optimizer_step(&mut self, lr: f64) {
        self.model.crf.zero_pinned_grads();

        // global L2 clip over all trainable gradients
        let clip = self.config.clip_norm;
        let mut sq_sum = 0.0;
        self.model.visit_params(&mut |_, e| {
            if e.trainable {
                sq_sum += e.grad.data().iter().map(|g| g * g).sum::<f64>();
            }
        });
        let norm = sq_sum.sqrt();
        let scale = if clip > 0.0 && norm > clip { clip / norm } else { 1.0 };

        let momentum = self.config.momentum;
        let buffers = &mut self.momentum_buffers;
        let mut idx = 0;
        self.model.visit_params(&mut |_, e| {
            if e.trainable {
                let buf = buffers[idx].data_mut();
                let grad = e.grad.data();
                let value = e.value.data_mut();
                for k in 0..grad.len() {
                    buf[k] = momentum * buf[k] + scale * grad[k];
                    value[k] -= lr * buf[k];
                }
            }
            idx += 1;
        });
    }

    /// One pass over the shuffled training corpus with per-sentence updates,
    /// followed by the scheduled evaluation.
    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let started = Instant::now();
        let lr = self.learning_rate();
        let mut order = std::mem::take(&mut self.order);
        self.rng.shuffle(&mut order);

        let mut primal_sum = 0.0;
        let mut adv_sum = 0.0;
        let mut total_sum = 0.0;
        let mut norm_sums: BTreeMap<String, f64> = BTreeMap::new();
        let mut tokens = 0usize;
        let mut steps = 0usize;

        for &idx in &order {
            let sentence = self.train_corpus.sentences[idx].clone();
            self.model.zero_grads();
            if self.config.use_at {
                let record = adversarial_step(&mut self.model, &sentence, &self.config.adv)?;
                self.adv_invocations += 1;
                primal_sum += record.primal_loss;
                adv_sum += record.adversarial_loss;
                total_sum += record.total_loss;
                for (name, norm) in record.perturbation_norms {
                    *norm_sums.entry(name).or_insert(0.0) += norm;
                }
            } else {
                let loss = self.model.forward_loss(&sentence)?;
                if !loss.is_finite() {
                    self.order = order;
                    return Err(Error::Numeric(format!(
                        "training loss {loss} at epoch {}",
                        self.epoch + 1
                    )));
                }
                self.model.backward_full(1.0)?;
                primal_sum += loss;
            }
            tokens += sentence.len();
            steps += 1;
            self.optimizer_step(lr);
        }
        self.order = order;
        self.epoch += 1;

        let train_loss = primal_sum / tokens as f64;
        if !train_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "mean training loss {train_loss} at epoch {}",
                self.epoch
            )));
        }

        let scheduled = self.epoch % self.config.eval_every == 0 || self.epoch == self.config.epochs;
        let (train_f1, dev_f1) = if scheduled {
            let train_f1 = self.evaluate(EvalSplit::Train)?;
            let dev_f1 = self.evaluate(EvalSplit::Dev)?;
            if dev_f1 > self.best_dev_f1 {
                self.best_dev_f1 = dev_f1;
                self.best_snapshot = Some((self.model.param_values(), self.rng.state()));
                self.evals_without_improvement = 0;
            } else {
                self.evals_without_improvement += 1;
                if self.evals_without_improvement >= self.config.early_stop_patience {
                    self.stopped_early = true;
                }
            }
            (train_f1, dev_f1)
        } else {
            // carry the last evaluated values forward
            (self.last_train_f1, self.last_dev_f1)
        };
        self.last_train_f1 = train_f1;
        self.last_dev_f1 = dev_f1;

        let adv = if self.config.use_at {
            Some(AdvEpochStats {
                mean_adversarial_loss: adv_sum / tokens as f64,
                mean_total_loss: total_sum / tokens as f64,
                mean_perturbation_norm: norm_sums
                    .into_iter()
                    .map(|(k, v)| (k, v / steps as f64))
                    .collect(),
            })
        } else {
            None
        };

        Ok(EpochRecord {
            epoch: self.epoch,
            train_loss,
            train_f1,
            dev_f1,
            wall_time: started.elapsed().as_secs_f64(),
            adv,
        })
    }

    /// Checkpoint of the best-dev parameters (falls back to the current
    /// parameters when no evaluation ever ran).
    pub fn best_checkpoint(&mut self) -> Checkpoint {
        let (values, rng_state) = match &self.best_snapshot {
            Some((v, s)) => (v.clone(), *s),
            None => (self.model.param_values(), self.rng.state()),
        };
        let mut best_model = Checkpoint {
            config: self.config.clone(),
            vocab: self.model.vocab.clone(),
            tagset: self.model.tagset.clone(),
            rng_state,
            best_dev_f1: self.best_dev_f1,
            tensors: values,
        };
        if !self.best_dev_f1.is_finite() {
            best_model.best_dev_f1 = 0.0;
        }
        best_model
    }
}

#[derive(Debug, Clone, Copy)]
pub enum EvalSplit {
    Train,
    Dev,
}

/// Token-level F1 of the model's decoding against gold tags.
pub fn evaluate_token_f1(model: &mut Model, corpus: &Corpus) -> Result<f64> {
    let mut counter = TokenCounter::new();
    for sentence in &corpus.sentences {
        let gold = sentence
            .gold_tags
            .as_ref()
            .ok_or_else(|| Error::Argument("evaluation sentence lacks gold tags".into()))?;
        let pred = model.decode(sentence)?;
        counter.observe(&pred, gold, &corpus.tagset)?;
    }
    Ok(counter.metrics().overall.f1)
}

/// Standard training driver: runs to completion (or early stop), returning
/// the best checkpoint and the full epoch history. A non-finite loss aborts
/// the loop but still returns the best state seen, with `aborted` set.
pub fn train(
    config: &TrainConfig,
    train_corpus: &Corpus,
    dev_corpus: &Corpus,
    pretrained: Option<&Pretrained>,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(
        config.clone(),
        train_corpus.clone(),
        dev_corpus.clone(),
        pretrained,
    )?;
    let mut history = Vec::new();
    let mut aborted = None;
    while !trainer.finished() {
        match trainer.run_epoch() {
            Ok(record) => history.push(record),
            Err(Error::Numeric(message)) => {
                aborted = Some(message);
                break;
            }
            Err(other) => return Err(other),
        }
    }
    let best_dev_f1 = trainer.best_dev_f1();
    let checkpoint = trainer.best_checkpoint();
    Ok(TrainOutcome {
        checkpoint,
        history,
        best_dev_f1: if best_dev_f1.is_finite() { best_dev_f1 } else { 0.0 },
        adv_invocations: trainer.adv_invocations,
        aborted,
    })
}

/// The four ablation conditions over (gated blocks, adversarial training).
pub const ABLATION_CONDITIONS: [(&str, bool, bool); 4] = [
    ("Basic", false, false),
    ("GC", true, false),
    ("AT", false, true),
    ("ATGC", true, true),
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub condition: String,
    pub use_gc: bool,
    pub use_at: bool,
    pub best_dev_f1: f64,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<8} {:>7} {:>7} {:>12} {:>8}", "model", "gc", "at", "best dev F1", "epochs");
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{:<8} {:>7} {:>7} {:>12.4} {:>8}",
                row.condition, row.use_gc, row.use_at, row.best_dev_f1, row.epochs_run
            );
        }
        out
    }
}

/// Run the four conditions with identical seeds and data, varying only the
/// two flags.
pub fn ablation_run(
    base: &TrainConfig,
    train_corpus: &Corpus,
    dev_corpus: &Corpus,
    pretrained: Option<&Pretrained>,
) -> Result<AblationReport> {
    let mut rows = Vec::with_capacity(4);
    for (name, use_gc, use_at) in ABLATION_CONDITIONS {
        let mut config = base.clone();
        config.model.use_gc = use_gc;
        config.use_at = use_at;
        let outcome = train(&config, train_corpus, dev_corpus, pretrained)?;
        rows.push(AblationRow {
            condition: name.to_string(),
            use_gc,
            use_at,
            best_dev_f1: outcome.best_dev_f1,
            epochs_run: outcome.history.len(),
        });
    }
    Ok(AblationReport { rows })
}

/// Fig-style training curves: one CSV record per epoch.
pub fn render_curves_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,train_f1,dev_f1\n");
    for r in history {
        let _ = writeln!(out, "{},{},{},{}", r.epoch, r.train_loss, r.train_f1, r.dev_f1);
    }
    out
}

/// One JSON object per epoch (adversarial aggregates included when active).
pub fn render_log_jsonl(history: &[EpochRecord]) -> Result<String> {
    let mut out = String::new();
    for r in history {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}
