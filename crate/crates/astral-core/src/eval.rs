//! Precision / recall / F1 for tag sequences.
//!
//! Token-level counting treats every non-"O" token as one answer element; a
//! hit is a position where prediction and gold agree exactly, including the
//! B/I prefix. Entity-level counting matches whole spans (type and both
//! boundaries). Zero-denominator conventions: token level reports 0 on an
//! empty side; entity level reports vacuous 1.0 when both sides are empty.

use crate::data::TagSet;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Raw answer-set sizes: `predicted` = |T_pre|, `gold` = |T_gt|,
/// `hits` = |A| with A the intersection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrfCounts {
    pub predicted: usize,
    pub gold: usize,
    pub hits: usize,
}

impl PrfCounts {
    fn merge(&mut self, other: PrfCounts) {
        self.predicted += other.predicted;
        self.gold += other.gold;
        self.hits += other.hits;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfTriple {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: PrfCounts,
}

impl PrfTriple {
    fn from_counts(counts: PrfCounts, vacuous_one: bool) -> PrfTriple {
        if vacuous_one && counts.predicted == 0 && counts.gold == 0 {
            return PrfTriple {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
                counts,
            };
        }
        let precision = if counts.predicted > 0 {
            counts.hits as f64 / counts.predicted as f64
        } else {
            0.0
        };
        let recall = if counts.gold > 0 {
            counts.hits as f64 / counts.gold as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        PrfTriple {
            precision,
            recall,
            f1,
            counts,
        }
    }
}

/// Overall metrics plus a per-entity-type breakdown (keyed by type name,
/// hence alphabetical).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub overall: PrfTriple,
    pub per_type: BTreeMap<String, PrfTriple>,
}

/// Streaming counter so corpus-level metrics aggregate over sentences before
/// the final division.
#[derive(Debug, Clone, Default)]
pub struct TokenCounter {
    overall: PrfCounts,
    per_type: BTreeMap<String, PrfCounts>,
}

impl TokenCounter {
    pub fn new() -> TokenCounter {
        TokenCounter::default()
    }

    pub fn observe(&mut self, pred: &[usize], gold: &[usize], tagset: &TagSet) -> Result<()> {
        if pred.len() != gold.len() {
            return Err(Error::Argument(format!(
                "length mismatch: {} predicted vs {} gold tags",
                pred.len(),
                gold.len()
            )));
        }
        let outside = tagset.outside_id();
        for (&p, &g) in pred.iter().zip(gold) {
            if p >= tagset.len() || g >= tagset.len() {
                return Err(Error::Argument("tag id out of range".into()));
            }
            if p != outside {
                self.overall.predicted += 1;
                let ty = tagset.entity_type_of(p).unwrap().to_string();
                self.per_type.entry(ty).or_default().predicted += 1;
            }
            if g != outside {
                self.overall.gold += 1;
                let ty = tagset.entity_type_of(g).unwrap().to_string();
                self.per_type.entry(ty).or_default().gold += 1;
            }
            if p != outside && g != outside && p == g {
                self.overall.hits += 1;
                let ty = tagset.entity_type_of(g).unwrap().to_string();
                self.per_type.entry(ty).or_default().hits += 1;
            }
        }
        Ok(())
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            overall: PrfTriple::from_counts(self.overall, false),
            per_type: self
                .per_type
                .iter()
                .map(|(k, &v)| (k.clone(), PrfTriple::from_counts(v, false)))
                .collect(),
        }
    }
}

/// Token-level metrics for one prediction/gold pair.
pub fn token_prf(pred: &[usize], gold: &[usize], tagset: &TagSet) -> Result<Metrics> {
    let mut counter = TokenCounter::new();
    counter.observe(pred, gold, tagset)?;
    Ok(counter.metrics())
}

/// One maximal entity span: type plus token range `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Span {
    pub entity_type: String,
    pub start: usize,
    pub end: usize,
}

/// Extract maximal spans, repairing stray inside tags: an "I-X" that opens a
/// sequence, follows "O", or follows a different type is treated as "B-X".
pub fn extract_spans(tags: &[usize], tagset: &TagSet) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<(String, usize)> = None;
    for (i, &id) in tags.iter().enumerate() {
        let ty = tagset.entity_type_of(id).map(str::to_string);
        let starts_new = match (&open, ty.as_ref()) {
            (_, None) => false,
            (None, Some(_)) => true,
            (Some((open_ty, _)), Some(t)) => tagset.is_begin(id) || open_ty != t,
        };
        if let Some((open_ty, start)) = open.take() {
            let continues = matches!(ty.as_ref(), Some(t) if !starts_new && *t == open_ty);
            if continues {
                open = Some((open_ty, start));
            } else {
                spans.push(Span {
                    entity_type: open_ty,
                    start,
                    end: i,
                });
            }
        }
        if open.is_none() {
            if let Some(t) = ty {
                open = Some((t, i));
            }
        }
    }
    if let Some((ty, start)) = open {
        spans.push(Span {
            entity_type: ty,
            start,
            end: tags.len(),
        });
    }
    spans
}

/// Streaming span-level counter.
#[derive(Debug, Clone, Default)]
pub struct SpanCounter {
    overall: PrfCounts,
    per_type: BTreeMap<String, PrfCounts>,
}

impl SpanCounter {
    pub fn new() -> SpanCounter {
        SpanCounter::default()
    }

    pub fn observe(&mut self, pred: &[usize], gold: &[usize], tagset: &TagSet) -> Result<()> {
        if pred.len() != gold.len() {
            return Err(Error::Argument(format!(
                "length mismatch: {} predicted vs {} gold tags",
                pred.len(),
                gold.len()
            )));
        }
        let pred_spans = extract_spans(pred, tagset);
        let gold_spans = extract_spans(gold, tagset);
        let mut sentence = PrfCounts::default();
        let mut by_type: BTreeMap<String, PrfCounts> = BTreeMap::new();
        for s in &pred_spans {
            sentence.predicted += 1;
            by_type.entry(s.entity_type.clone()).or_default().predicted += 1;
            if gold_spans.contains(s) {
                sentence.hits += 1;
                by_type.entry(s.entity_type.clone()).or_default().hits += 1;
            }
        }
        for s in &gold_spans {
            sentence.gold += 1;
            by_type.entry(s.entity_type.clone()).or_default().gold += 1;
        }
        self.overall.merge(sentence);
        for (k, v) in by_type {
            self.per_type.entry(k).or_default().merge(v);
        }
        Ok(())
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            overall: PrfTriple::from_counts(self.overall, true),
            per_type: self
                .per_type
                .iter()
                .map(|(k, &v)| (k.clone(), PrfTriple::from_counts(v, true)))
                .collect(),
        }
    }
}

/// Entity-level (exact span and type) metrics for one pair.
pub fn entity_prf(pred: &[usize], gold: &[usize], tagset: &TagSet) -> Result<Metrics> {
    let mut counter = SpanCounter::new();
    counter.observe(pred, gold, tagset)?;
    Ok(counter.metrics())
}

impl Metrics {
    /// Aligned table: one row per entity type (alphabetical), OVERALL last.
    /// Types known to `tagset` but absent from the data appear with zero
    /// support.
    pub fn render_table(&self, tagset: &TagSet) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:>9} {:>9} {:>9} {:>7} {:>7} {:>7}",
            "type", "precision", "recall", "f1", "pred", "gold", "hits"
        );
        let zero = PrfTriple::from_counts(PrfCounts::default(), false);
        for ty in tagset.entity_types() {
            let t = self.per_type.get(ty).copied().unwrap_or(zero);
            let _ = writeln!(
                out,
                "{:<12} {:>9.4} {:>9.4} {:>9.4} {:>7} {:>7} {:>7}",
                ty, t.precision, t.recall, t.f1, t.counts.predicted, t.counts.gold, t.counts.hits
            );
        }
        let o = &self.overall;
        let _ = writeln!(
            out,
            "{:<12} {:>9.4} {:>9.4} {:>9.4} {:>7} {:>7} {:>7}",
            "OVERALL", o.precision, o.recall, o.f1, o.counts.predicted, o.counts.gold, o.counts.hits
        );
        out
    }
}
