//! Token and feature embedding tables.
//!
//! A sentence embeds as the column-wise concatenation of a word-table lookup
//! and a feature-table lookup: column i is `[word_table[:, token_id_i];
//! feature_table[:, feature_id_i]]`. The word table can be seeded from a
//! pretrained text file; the feature table is always trained from scratch.

use crate::data::{Sentence, Vocab, NUM_FEATURES, UNK_TOKEN};
use crate::error::{Error, Result};
use crate::layer::{Layer, LayerParams, ParamEntry};
use crate::rng::Rng;
use crate::tensor::{init, InitScheme, Tensor};

/// Word-vector file contents: tokens in file order plus a trailing unk entry
/// whose vector is the mean of all loaded rows.
#[derive(Debug, Clone)]
pub struct Pretrained {
    pub dim: usize,
    pub vocab: Vocab,
    /// `dim × (rows + 1)`; the last column is the unk mean.
    pub table: Tensor,
}

impl Pretrained {
    pub fn vector(&self, token: &str) -> Option<Vec<f64>> {
        if !self.vocab.contains(token) {
            return None;
        }
        Some(self.table.col(self.vocab.lookup(token)))
    }
}

/// Parse the plain-text word-vector format: one token followed by its values
/// per line, whitespace-separated. A first line consisting of exactly two
/// integers is treated as a `count dim` header and skipped.
pub fn parse_pretrained(text: &str) -> Result<Pretrained> {
    let mut tokens: Vec<String> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut dim: Option<usize> = None;
    for (line_index, line) in text.lines().enumerate() {
        let line_no = line_index + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if line_no == 1
            && fields.len() == 2
            && fields.iter().all(|f| f.parse::<usize>().is_ok())
        {
            continue;
        }
        if fields.len() < 2 {
            return Err(Error::Parse {
                line: line_no,
                message: "expected a token followed by at least one value".into(),
            });
        }
        let mut values = Vec::with_capacity(fields.len() - 1);
        for f in &fields[1..] {
            values.push(f.parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad float {f:?}"),
            })?);
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("dimension {} does not match earlier rows of dimension {d}", values.len()),
                });
            }
            _ => {}
        }
        tokens.push(fields[0].to_string());
        rows.push(values);
    }
    let dim = dim.ok_or_else(|| Error::Argument("empty embedding file".into()))?;

    // unk = mean of all loaded rows, appended last.
    let mut mean = vec![0.0; dim];
    for row in &rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= rows.len() as f64;
    }

    let n = rows.len();
    let mut table = Tensor::zeros(&[dim, n + 1]);
    for (j, row) in rows.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            table.set2(i, j, v);
        }
    }
    table.set_col(n, &mean);

    tokens.push(UNK_TOKEN.to_string());
    let vocab = Vocab::from_tokens_with_unk(tokens, n);
    Ok(Pretrained { dim, vocab, table })
}

pub fn load_pretrained(path: &std::path::Path) -> Result<Pretrained> {
    parse_pretrained(&std::fs::read_to_string(path)?)
}

/// The two lookup tables plus the id sequences cached by the last forward.
pub struct EmbeddingTables {
    params: LayerParams,
    word_dim: usize,
    feat_dim: usize,
    vocab_size: usize,
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl EmbeddingTables {
    /// Build tables for `vocab`. Tokens found in `pretrained` copy their
    /// stored vectors; missing tokens draw scaled-uniform columns; the unk
    /// entry takes the pretrained mean when available. `trainable_words`
    /// controls whether the optimizer updates the word table (the feature
    /// table is always trainable).
    pub fn new(
        vocab: &Vocab,
        word_dim: usize,
        feat_dim: usize,
        trainable_words: bool,
        pretrained: Option<&Pretrained>,
        rng: &mut Rng,
    ) -> Result<EmbeddingTables> {
        if word_dim == 0 || feat_dim == 0 {
            return Err(Error::Config("embedding dimensions must be >= 1".into()));
        }
        if let Some(p) = pretrained {
            if p.dim != word_dim {
                return Err(Error::Config(format!(
                    "pretrained dimension {} does not match word_dim {}",
                    p.dim, word_dim
                )));
            }
        }
        let n_id = vocab.size();
        let word_table = match pretrained {
            None => init(&[word_dim, n_id], InitScheme::ScaledUniform, rng),
            Some(p) => {
                let mut t = Tensor::zeros(&[word_dim, n_id]);
                for id in 0..n_id {
                    let token = vocab.token(id);
                    let column = if id == vocab.unk_id() {
                        Some(p.table.col(p.vocab.unk_id()))
                    } else {
                        p.vector(token)
                    };
                    match column {
                        Some(v) => t.set_col(id, &v),
                        None => {
                            let v = init(&[word_dim], InitScheme::ScaledUniform, rng);
                            t.set_col(id, v.data());
                        }
                    }
                }
                t
            }
        };
        let feature_table = init(&[feat_dim, NUM_FEATURES], InitScheme::ScaledUniform, rng);

        let mut params = LayerParams::new();
        if trainable_words {
            params.add("word_table", word_table)?;
        } else {
            params.add_fixed("word_table", word_table)?;
        }
        params.add("feature_table", feature_table)?;
        Ok(EmbeddingTables {
            params,
            word_dim,
            feat_dim,
            vocab_size: n_id,
            cache: None,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.word_dim + self.feat_dim
    }

    pub fn word_dim(&self) -> usize {
        self.word_dim
    }

    pub fn feat_dim(&self) -> usize {
        self.feat_dim
    }

    pub fn params(&self) -> &LayerParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut LayerParams {
        &mut self.params
    }

    /// Embed an id sequence into `d_e × n`.
    pub fn forward_ids(&mut self, token_ids: &[usize], feature_ids: &[usize]) -> Result<Tensor> {
        if token_ids.is_empty() || token_ids.len() != feature_ids.len() {
            return Err(Error::Argument(
                "embedding forward: empty or mismatched id sequences".into(),
            ));
        }
        for &t in token_ids {
            if t >= self.vocab_size {
                return Err(Error::Argument(format!(
                    "token id {t} out of range for vocabulary of {}",
                    self.vocab_size
                )));
            }
        }
        for &f in feature_ids {
            if f >= NUM_FEATURES {
                return Err(Error::Argument(format!(
                    "feature id {f} out of range [0, {NUM_FEATURES})"
                )));
            }
        }
        let n = token_ids.len();
        let word = &self.params.entry("word_table").value;
        let feat = &self.params.entry("feature_table").value;
        let d_e = self.word_dim + self.feat_dim;
        let mut e = Tensor::zeros(&[d_e, n]);
        for (col, (&t, &f)) in token_ids.iter().zip(feature_ids).enumerate() {
            for row in 0..self.word_dim {
                e.set2(row, col, word.at2(row, t));
            }
            for row in 0..self.feat_dim {
                e.set2(self.word_dim + row, col, feat.at2(row, f));
            }
        }
        self.cache = Some((token_ids.to_vec(), feature_ids.to_vec()));
        Ok(e)
    }

    pub fn forward_sentence(&mut self, sentence: &Sentence) -> Result<Tensor> {
        self.forward_ids(&sentence.token_ids, &sentence.feature_ids)
    }

    /// Scatter-add `grad_e` into the table gradients: the top `word_dim`
    /// rows of column i go to the word column used at position i, the rest
    /// to the feature column. Repeated ids accumulate. The scatter builds a
    /// local increment first so one backward call touches each stored
    /// gradient coordinate exactly once (repeated backwards stay exactly
    /// additive).
    pub fn backward(&mut self, grad_e: &Tensor) -> Result<()> {
        let (token_ids, feature_ids) = self
            .cache
            .as_ref()
            .ok_or(Error::State { layer: "EmbeddingTables" })?
            .clone();
        let n = token_ids.len();
        let d_e = self.word_dim + self.feat_dim;
        if grad_e.shape() != [d_e, n] {
            return Err(Error::dim("embedding backward", grad_e.shape(), &[d_e, n]));
        }
        let word_dim = self.word_dim;
        let feat_dim = self.feat_dim;
        {
            let wg = &mut self.params.entry_mut("word_table").grad;
            let mut inc = Tensor::zeros(wg.shape());
            for (col, &t) in token_ids.iter().enumerate() {
                for row in 0..word_dim {
                    inc.add2(row, t, grad_e.at2(row, col));
                }
            }
            wg.add_assign(&inc)?;
        }
        {
            let fg = &mut self.params.entry_mut("feature_table").grad;
            let mut inc = Tensor::zeros(fg.shape());
            for (col, &f) in feature_ids.iter().enumerate() {
                for row in 0..feat_dim {
                    inc.add2(row, f, grad_e.at2(word_dim + row, col));
                }
            }
            fg.add_assign(&inc)?;
        }
        Ok(())
    }
}

/// [`Layer`] adapter over fixed id sequences so the embedding scatter can go
/// through the generic gradient checker. The input tensor is ignored.
pub struct EmbeddingLayer {
    pub tables: EmbeddingTables,
    token_ids: Vec<usize>,
    feature_ids: Vec<usize>,
}

impl EmbeddingLayer {
    pub fn new(tables: EmbeddingTables, token_ids: Vec<usize>, feature_ids: Vec<usize>) -> Self {
        EmbeddingLayer {
            tables,
            token_ids,
            feature_ids,
        }
    }
}

impl Layer for EmbeddingLayer {
    fn forward(&mut self, _input: &Tensor) -> Result<Tensor> {
        self.tables.forward_ids(&self.token_ids, &self.feature_ids)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        self.tables.backward(grad_output)?;
        Ok(Tensor::zeros(&[1]))
    }

    fn param_count(&self) -> usize {
        self.tables.params.len()
    }

    fn param(&self, i: usize) -> &ParamEntry {
        self.tables.params.at(i)
    }

    fn param_mut(&mut self, i: usize) -> &mut ParamEntry {
        self.tables.params.at_mut(i)
    }

    fn input_grad_defined(&self) -> bool {
        false
    }
}
