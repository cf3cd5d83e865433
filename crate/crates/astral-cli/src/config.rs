//! Flat on-disk run configuration.
//!
//! One JSON object of scalar keys (strict: unknown keys are rejected) plus
//! file paths. `--set key=value` flags override file values, and the
//! `ASTRAL_SEED` environment variable overrides the seed last.

use astral_core::adversarial::{AdvConfig, AdvTarget};
use astral_core::error::Error;
use astral_core::model::ModelConfig;
use astral_core::train::TrainConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    // optimization
    pub epochs: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub momentum: f64,
    pub seed: u64,
    pub early_stop_patience: usize,
    pub eval_every: usize,
    pub clip_norm: f64,
    pub min_count: usize,
    // ablation flags
    pub use_gc: bool,
    pub use_at: bool,
    // adversarial step
    pub epsilon: f64,
    pub adv_targets: Vec<String>,
    pub norm_floor: f64,
    // architecture
    pub word_dim: usize,
    pub feat_dim: usize,
    pub hidden_dim: usize,
    pub window_size: usize,
    pub conv_channels: Option<usize>,
    pub gate_dim: Option<usize>,
    pub iob_constraints: bool,
    pub train_word_embeddings: bool,
    // data
    pub train_path: Option<String>,
    pub dev_path: Option<String>,
    pub test_path: Option<String>,
    pub embeddings_path: Option<String>,
    pub token_col: usize,
    pub tag_col: usize,
    // outputs
    pub output_dir: String,
    pub checkpoint_path: Option<String>,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        let t = TrainConfig::default();
        RunConfig {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            lr_decay: t.lr_decay,
            momentum: t.momentum,
            seed: t.seed,
            early_stop_patience: t.early_stop_patience,
            eval_every: t.eval_every,
            clip_norm: t.clip_norm,
            min_count: t.min_count,
            use_gc: t.model.use_gc,
            use_at: t.use_at,
            epsilon: t.adv.epsilon,
            adv_targets: t.adv.targets.iter().map(|t| t.name().to_string()).collect(),
            norm_floor: t.adv.norm_floor,
            word_dim: t.model.word_dim,
            feat_dim: t.model.feat_dim,
            hidden_dim: t.model.hidden_dim,
            window_size: t.model.window_size,
            conv_channels: t.model.conv_channels,
            gate_dim: t.model.gate_dim,
            iob_constraints: t.model.iob_constraints,
            train_word_embeddings: t.model.train_word_embeddings,
            train_path: None,
            dev_path: None,
            test_path: None,
            embeddings_path: None,
            token_col: 0,
            tag_col: 1,
            output_dir: ".".into(),
            checkpoint_path: None,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("config {}: {e}", path.display())))
    }

    /// Apply one `key=value` override. Values parse as JSON where possible,
    /// falling back to plain strings, and the result must still satisfy the
    /// strict schema.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), Error> {
        let (key, raw) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
        let mut tree = serde_json::to_value(&*self).expect("config serializes");
        let obj = tree.as_object_mut().expect("config is an object");
        if !obj.contains_key(key) {
            return Err(Error::Config(format!("unknown config key {key:?}")));
        }
        let value: serde_json::Value = match serde_json::from_str(raw) {
            Ok(v) => v,
            Err(_) => serde_json::Value::String(raw.to_string()),
        };
        obj.insert(key.to_string(), value);
        *self = serde_json::from_value(tree)
            .map_err(|e| Error::Config(format!("override {spec:?}: {e}")))?;
        Ok(())
    }

    pub fn to_train_config(&self) -> Result<TrainConfig, Error> {
        let mut targets = Vec::with_capacity(self.adv_targets.len());
        for name in &self.adv_targets {
            targets.push(AdvTarget::parse(name)?);
        }
        let config = TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            lr_decay: self.lr_decay,
            momentum: self.momentum,
            seed: self.seed,
            early_stop_patience: self.early_stop_patience,
            eval_every: self.eval_every,
            clip_norm: self.clip_norm,
            use_at: self.use_at,
            adv: AdvConfig {
                epsilon: self.epsilon,
                targets,
                norm_floor: self.norm_floor,
            },
            model: ModelConfig {
                word_dim: self.word_dim,
                feat_dim: self.feat_dim,
                hidden_dim: self.hidden_dim,
                window_size: self.window_size,
                conv_channels: self.conv_channels,
                gate_dim: self.gate_dim,
                use_gc: self.use_gc,
                iob_constraints: self.iob_constraints,
                train_word_embeddings: self.train_word_embeddings,
            },
            min_count: self.min_count,
        };
        config.validate()?;
        Ok(config)
    }

    /// `key = value` lines for help output, one per config key.
    pub fn describe_defaults() -> String {
        let value = serde_json::to_value(RunConfig::default()).expect("config serializes");
        let mut out = String::new();
        for (key, v) in value.as_object().expect("object") {
            out.push_str(&format!("  {key} = {v}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<RunConfig>("{\"epochz\": 3}").unwrap_err();
        assert!(err.to_string().contains("unknown field"));
    }

    #[test]
    fn overrides_parse_json_scalars() {
        let mut cfg = RunConfig::default();
        cfg.apply_override("epochs=7").unwrap();
        cfg.apply_override("use_at=false").unwrap();
        cfg.apply_override("train_path=data/train.conll").unwrap();
        cfg.apply_override("adv_targets=[\"E_prime\"]").unwrap();
        assert_eq!(cfg.epochs, 7);
        assert!(!cfg.use_at);
        assert_eq!(cfg.train_path.as_deref(), Some("data/train.conll"));
        assert_eq!(cfg.adv_targets, vec!["E_prime"]);
        assert!(cfg.apply_override("nope=1").is_err());
        assert!(cfg.apply_override("epochs").is_err());
    }

    #[test]
    fn bad_adv_target_is_config_error() {
        let mut cfg = RunConfig::default();
        cfg.apply_override("adv_targets=[\"Q\"]").unwrap();
        let err = cfg.to_train_config().unwrap_err();
        assert!(err.to_string().contains("E_prime"));
    }
}
