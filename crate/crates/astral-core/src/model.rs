//! Full pipeline assembly: embedding → gated CNN I → Bi-LSTM → gated CNN II
//! → CRF. The stage-level API exposes each block's forward and backward so
//! the adversarial trainer can inject perturbations between stages; plain
//! training and decoding drive the same stages end to end.

use crate::bilstm::BiLstm;
use crate::crf::{Crf, Emissions};
use crate::data::{Sentence, TagSet, Vocab};
use crate::embedding::{EmbeddingTables, Pretrained};
use crate::error::{Error, Result};
use crate::gcnn::{GatedCnn, GatedCnnConfig};
use crate::layer::{Layer, ParamEntry};
use crate::rng::Rng;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Architecture hyperparameters. `conv_channels` and `gate_dim` default to
/// each gated block's own input width when unset, so a block doubles its
/// input dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub word_dim: usize,
    pub feat_dim: usize,
    pub hidden_dim: usize,
    pub window_size: usize,
    pub conv_channels: Option<usize>,
    pub gate_dim: Option<usize>,
    pub use_gc: bool,
    pub iob_constraints: bool,
    pub train_word_embeddings: bool,
}

impl Default for ModelConfig {
    fn default() -> ModelConfig {
        ModelConfig {
            word_dim: 50,
            feat_dim: 20,
            hidden_dim: 50,
            window_size: 3,
            conv_channels: None,
            gate_dim: None,
            use_gc: true,
            iob_constraints: true,
            train_word_embeddings: false,
        }
    }
}

impl ModelConfig {
    fn gc_config(&self, input_dim: usize) -> GatedCnnConfig {
        GatedCnnConfig {
            input_dim,
            window_size: self.window_size,
            conv_channels: self.conv_channels.unwrap_or(input_dim),
            gate_dim: self.gate_dim.unwrap_or(input_dim),
        }
    }
}

pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub tagset: TagSet,
    pub embedding: EmbeddingTables,
    pub gc1: Option<GatedCnn>,
    pub bilstm: BiLstm,
    pub gc2: Option<GatedCnn>,
    pub crf: Crf,
}

impl Model {
    pub fn new(
        config: ModelConfig,
        vocab: Vocab,
        tagset: TagSet,
        pretrained: Option<&Pretrained>,
        rng: &mut Rng,
    ) -> Result<Model> {
        let embedding = EmbeddingTables::new(
            &vocab,
            config.word_dim,
            config.feat_dim,
            config.train_word_embeddings,
            pretrained,
            rng,
        )?;
        let embed_dim = embedding.embed_dim();
        let gc1 = if config.use_gc {
            Some(GatedCnn::new(config.gc_config(embed_dim), rng)?)
        } else {
            None
        };
        let lstm_in = gc1.as_ref().map_or(embed_dim, GatedCnn::output_dim);
        let bilstm = BiLstm::new(lstm_in, config.hidden_dim, rng)?;
        let h_dim = bilstm.output_dim();
        let gc2 = if config.use_gc {
            Some(GatedCnn::new(config.gc_config(h_dim), rng)?)
        } else {
            None
        };
        let crf_in = gc2.as_ref().map_or(h_dim, GatedCnn::output_dim);
        let mut crf = Crf::new(crf_in, tagset.len(), rng)?;
        if config.iob_constraints {
            crf.apply_iob_constraints(&tagset)?;
        }
        Ok(Model {
            config,
            vocab,
            tagset,
            embedding,
            gc1,
            bilstm,
            gc2,
            crf,
        })
    }

    /// Width of the columns entering the CRF.
    pub fn feature_dim(&self) -> usize {
        self.crf.input_dim()
    }

    // ----- forward stages -----

    pub fn stage_embed(&mut self, sentence: &Sentence) -> Result<Tensor> {
        self.embedding.forward_sentence(sentence)
    }

    /// Gated CNN I, or the identity when the gated blocks are disabled.
    pub fn stage_gc1(&mut self, e: &Tensor) -> Result<Tensor> {
        match &mut self.gc1 {
            Some(gc) => gc.forward(e),
            None => Ok(e.clone()),
        }
    }

    pub fn stage_bilstm(&mut self, e_prime: &Tensor) -> Result<Tensor> {
        self.bilstm.forward(e_prime)
    }

    /// Gated CNN II, or the identity when the gated blocks are disabled.
    pub fn stage_gc2(&mut self, h: &Tensor) -> Result<Tensor> {
        match &mut self.gc2 {
            Some(gc) => gc.forward(h),
            None => Ok(h.clone()),
        }
    }

    pub fn stage_loss(&mut self, h_prime: &Tensor, gold: &[usize]) -> Result<f64> {
        self.crf.loss_forward(h_prime, gold)
    }

    // ----- backward stages (mirror order) -----

    pub fn stage_loss_backward(&mut self, scale: f64) -> Result<Tensor> {
        self.crf.loss_backward(scale)
    }

    pub fn stage_gc2_backward(&mut self, grad_h_prime: &Tensor) -> Result<Tensor> {
        match &mut self.gc2 {
            Some(gc) => gc.backward(grad_h_prime),
            None => Ok(grad_h_prime.clone()),
        }
    }

    pub fn stage_bilstm_backward(&mut self, grad_h: &Tensor) -> Result<Tensor> {
        self.bilstm.backward(grad_h)
    }

    pub fn stage_gc1_backward(&mut self, grad_e_prime: &Tensor) -> Result<Tensor> {
        match &mut self.gc1 {
            Some(gc) => gc.backward(grad_e_prime),
            None => Ok(grad_e_prime.clone()),
        }
    }

    pub fn stage_embed_backward(&mut self, grad_e: &Tensor) -> Result<()> {
        self.embedding.backward(grad_e)
    }

    // ----- composed paths -----

    /// Full forward pass to the NLL of the sentence's gold tags.
    pub fn forward_loss(&mut self, sentence: &Sentence) -> Result<f64> {
        let gold = sentence
            .gold_tags
            .clone()
            .ok_or_else(|| Error::Argument("sentence has no gold tags".into()))?;
        let e = self.stage_embed(sentence)?;
        let e_prime = self.stage_gc1(&e)?;
        let h = self.stage_bilstm(&e_prime)?;
        let h_prime = self.stage_gc2(&h)?;
        self.stage_loss(&h_prime, &gold)
    }

    /// Full backward pass for `scale · loss`, accumulating all gradients.
    pub fn backward_full(&mut self, scale: f64) -> Result<()> {
        let d_h_prime = self.stage_loss_backward(scale)?;
        let d_h = self.stage_gc2_backward(&d_h_prime)?;
        let d_e_prime = self.stage_bilstm_backward(&d_h)?;
        let d_e = self.stage_gc1_backward(&d_e_prime)?;
        self.stage_embed_backward(&d_e)
    }

    /// Emission scores for a sentence (no gold needed).
    pub fn emissions(&mut self, sentence: &Sentence) -> Result<Emissions> {
        let e = self.stage_embed(sentence)?;
        let e_prime = self.stage_gc1(&e)?;
        let h = self.stage_bilstm(&e_prime)?;
        let h_prime = self.stage_gc2(&h)?;
        self.crf.emissions(&h_prime)
    }

    /// Viterbi tag ids for a sentence.
    pub fn decode(&mut self, sentence: &Sentence) -> Result<Vec<usize>> {
        let emissions = self.emissions(sentence)?;
        Ok(self.crf.viterbi_decode(&emissions).0)
    }

    pub fn zero_grads(&mut self) {
        self.visit_params(&mut |_, e| e.grad.fill(0.0));
    }

    /// Visit every parameter entry with a stable scope prefix; iteration
    /// order is fixed and deterministic.
    pub fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut ParamEntry)) {
        for e in self.embedding.params_mut().iter_mut() {
            f("embedding", e);
        }
        if let Some(gc) = &mut self.gc1 {
            for i in 0..gc.param_count() {
                f("gc1", gc.param_mut(i));
            }
        }
        for e in self.bilstm.fwd_params_mut().iter_mut() {
            f("bilstm.fwd", e);
        }
        for e in self.bilstm.bwd_params_mut().iter_mut() {
            f("bilstm.bwd", e);
        }
        if let Some(gc) = &mut self.gc2 {
            for i in 0..gc.param_count() {
                f("gc2", gc.param_mut(i));
            }
        }
        for e in self.crf.params_mut().iter_mut() {
            f("crf", e);
        }
    }

    /// Snapshot of all parameter values as `(scoped name, tensor)` pairs in
    /// visit order.
    pub fn param_values(&mut self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.visit_params(&mut |scope, e| {
            out.push((format!("{scope}.{}", e.name()), e.value.clone()));
        });
        out
    }

    /// Load parameter values produced by [`Model::param_values`]; every
    /// entry must be present with a matching shape.
    pub fn load_param_values(&mut self, values: &[(String, Tensor)]) -> Result<()> {
        let mut missing: Vec<String> = Vec::new();
        let mut bad_shape: Vec<String> = Vec::new();
        self.visit_params(&mut |scope, e| {
            let key = format!("{scope}.{}", e.name());
            match values.iter().find(|(name, _)| *name == key) {
                None => missing.push(key),
                Some((_, t)) if t.shape() != e.value.shape() => bad_shape.push(key),
                Some((_, t)) => e.value = t.clone(),
            }
        });
        if !missing.is_empty() {
            return Err(Error::CheckpointFormat(format!(
                "missing tensors: {}",
                missing.join(", ")
            )));
        }
        if !bad_shape.is_empty() {
            return Err(Error::CheckpointFormat(format!(
                "tensor shape mismatch: {}",
                bad_shape.join(", ")
            )));
        }
        // restore the derived pin bookkeeping
        if self.config.iob_constraints {
            let tagset = self.tagset.clone();
            self.crf.apply_iob_constraints(&tagset)?;
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::data::{corpus_from_pairs, Corpus};

    pub fn tiny_corpus() -> Corpus {
        let pairs = vec![
            (
                vec!["Alice".into(), "visited".into(), "Paris".into()],
                vec!["B-PER".into(), "O".into(), "B-LOC".into()],
            ),
            (
                vec!["Bob".into(), "left".into(), "Berlin".into()],
                vec!["B-PER".into(), "O".into(), "B-LOC".into()],
            ),
        ];
        corpus_from_pairs(&pairs, 1).unwrap()
    }

    /// The "tiny model" used across adversarial and gradient tests.
    pub fn tiny_config() -> ModelConfig {
        ModelConfig {
            word_dim: 4,
            feat_dim: 2,
            hidden_dim: 3,
            window_size: 3,
            conv_channels: None,
            gate_dim: None,
            use_gc: true,
            iob_constraints: true,
            train_word_embeddings: true,
        }
    }

    pub fn tiny_model(seed: u64, use_gc: bool) -> Model {
        let corpus = tiny_corpus();
        let mut config = tiny_config();
        config.use_gc = use_gc;
        Model::new(config, corpus.vocab, corpus.tagset, None, &mut Rng::new(seed)).unwrap()
    }
}
