//! CoNLL-style corpus ingestion: column parsing, orthographic token
//! features, vocabularies, IOB tag sets and sequence validation.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Write as _;

/// Number of orthographic feature classes; fixed by the classifier below.
pub const NUM_FEATURES: usize = 5;

/// Token placed at the end of every vocabulary for out-of-vocabulary lookups.
pub const UNK_TOKEN: &str = "<unk>";

/// Orthographic token classes. [`classify_feature`] assigns exactly one per
/// token by priority, so the classes are exhaustive and mutually exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenFeature {
    /// No alphanumeric character at all ("." "--" "&").
    NoAlphaNum = 0,
    /// Contains a decimal digit ("1996", "Covid-19").
    Numeric = 1,
    /// Uppercase letter after the first position ("EU", "iPhone").
    UpperNotFirst = 2,
    /// First character uppercase, no digits, no later uppercase ("German").
    UpperFirst = 3,
    /// Everything else ("lamb", "don't").
    AllLower = 4,
}

impl TokenFeature {
    pub fn id(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            TokenFeature::NoAlphaNum => "no-alpha-num",
            TokenFeature::Numeric => "numeric",
            TokenFeature::UpperNotFirst => "upper-not-first",
            TokenFeature::UpperFirst => "upper-first",
            TokenFeature::AllLower => "all-lower",
        }
    }
}

/// Classify a token into one of the five orthographic classes.
///
/// Priority order: no-alpha-num, numeric (any decimal digit), upper-not-first
/// (uppercase at a char position > 0), upper-first, all-lower as catch-all.
pub fn classify_feature(token: &str) -> Result<TokenFeature> {
    if token.is_empty() {
        return Err(Error::Argument("classify_feature: empty token".into()));
    }
    if !token.chars().any(|c| c.is_alphanumeric()) {
        return Ok(TokenFeature::NoAlphaNum);
    }
    if token.chars().any(|c| c.is_ascii_digit()) {
        return Ok(TokenFeature::Numeric);
    }
    if token.chars().skip(1).any(|c| c.is_uppercase()) {
        return Ok(TokenFeature::UpperNotFirst);
    }
    if token.chars().next().is_some_and(|c| c.is_uppercase()) {
        return Ok(TokenFeature::UpperFirst);
    }
    Ok(TokenFeature::AllLower)
}

/// One tokenized sentence with parallel id sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub token_ids: Vec<usize>,
    pub feature_ids: Vec<usize>,
    pub gold_tags: Option<Vec<usize>>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Untagged sentence from raw tokens, indexed against `vocab` (unknown
    /// tokens map to unk).
    pub fn from_raw_tokens(tokens: Vec<String>, vocab: &Vocab) -> Result<Sentence> {
        if tokens.is_empty() {
            return Err(Error::Argument("empty token sequence".into()));
        }
        let token_ids = tokens.iter().map(|t| vocab.lookup(t)).collect();
        let feature_ids = tokens
            .iter()
            .map(|t| classify_feature(t).map(TokenFeature::id))
            .collect::<Result<Vec<_>>>()?;
        Ok(Sentence {
            tokens,
            token_ids,
            feature_ids,
            gold_tags: None,
        })
    }
}

/// Token-string to id map with a dedicated unknown entry at the last index.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "VocabSerde", into = "VocabSerde")]
pub struct Vocab {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
    unk_id: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabSerde {
    tokens: Vec<String>,
    unk_id: usize,
}

impl From<VocabSerde> for Vocab {
    fn from(v: VocabSerde) -> Vocab {
        Vocab::from_tokens_with_unk(v.tokens, v.unk_id)
    }
}

impl From<Vocab> for VocabSerde {
    fn from(v: Vocab) -> VocabSerde {
        VocabSerde {
            tokens: v.id_to_token,
            unk_id: v.unk_id,
        }
    }
}

impl Vocab {
    /// Build from tokens in first-appearance order, dropping tokens seen
    /// fewer than `min_count` times, then append the unknown entry.
    pub fn build(tokens: impl IntoIterator<Item = impl AsRef<str>>, min_count: usize) -> Vocab {
        let mut order: Vec<String> = Vec::new();
        let mut counts: HashMap<String, usize> = HashMap::new();
        for t in tokens {
            let t = t.as_ref();
            let c = counts.entry(t.to_string()).or_insert(0);
            if *c == 0 {
                order.push(t.to_string());
            }
            *c += 1;
        }
        let kept: Vec<String> = order
            .into_iter()
            .filter(|t| counts[t] >= min_count.max(1))
            .collect();
        let unk_id = kept.len();
        let mut all = kept;
        all.push(UNK_TOKEN.to_string());
        Vocab::from_tokens_with_unk(all, unk_id)
    }

    /// Rebuild from an explicit id-ordered token list (checkpoints,
    /// pretrained embedding files).
    pub fn from_tokens_with_unk(id_to_token: Vec<String>, unk_id: usize) -> Vocab {
        let mut token_to_id = HashMap::with_capacity(id_to_token.len());
        for (i, t) in id_to_token.iter().enumerate() {
            token_to_id.entry(t.clone()).or_insert(i);
        }
        Vocab {
            token_to_id,
            id_to_token,
            unk_id,
        }
    }

    pub fn lookup(&self, token: &str) -> usize {
        *self.token_to_id.get(token).unwrap_or(&self.unk_id)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.id_to_token[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn unk_id(&self) -> usize {
        self.unk_id
    }

    /// Total number of ids including the unknown entry.
    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }
}

/// Ordered IOB tag inventory ("O", "B-X", "I-X").
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct TagSet {
    tags: Vec<String>,
    entity_types: Vec<String>,
    outside_id: usize,
}

impl From<Vec<String>> for TagSet {
    fn from(tags: Vec<String>) -> TagSet {
        TagSet::new(tags).expect("invalid tag list")
    }
}

impl From<TagSet> for Vec<String> {
    fn from(t: TagSet) -> Vec<String> {
        t.tags
    }
}

impl TagSet {
    /// Validates the IOB shape: "O" must be present, every tag must be "O",
    /// "B-X" or "I-X", and every "I-X" needs a matching "B-X".
    pub fn new(tags: Vec<String>) -> Result<TagSet> {
        let mut outside_id = None;
        let mut entity_types: Vec<String> = Vec::new();
        for (i, tag) in tags.iter().enumerate() {
            if tag == "O" {
                if outside_id.is_some() {
                    return Err(Error::Argument("duplicate \"O\" tag".into()));
                }
                outside_id = Some(i);
            } else if let Some(t) = tag.strip_prefix("B-").or_else(|| tag.strip_prefix("I-")) {
                if t.is_empty() {
                    return Err(Error::Argument(format!("tag {tag:?} has an empty entity type")));
                }
                if !entity_types.iter().any(|e| e == t) {
                    entity_types.push(t.to_string());
                }
            } else {
                return Err(Error::Argument(format!(
                    "tag {tag:?} is not in IOB form (\"O\", \"B-X\" or \"I-X\")"
                )));
            }
        }
        let outside_id =
            outside_id.ok_or_else(|| Error::Argument("tag set lacks the \"O\" tag".into()))?;
        for tag in &tags {
            if let Some(t) = tag.strip_prefix("I-") {
                if !tags.iter().any(|b| b.strip_prefix("B-") == Some(t)) {
                    return Err(Error::Argument(format!("tag {tag:?} has no matching B-{t}")));
                }
            }
        }
        entity_types.sort();
        Ok(TagSet {
            tags,
            entity_types,
            outside_id,
        })
    }

    pub fn id(&self, tag: &str) -> Option<usize> {
        self.tags.iter().position(|t| t == tag)
    }

    pub fn tag(&self, id: usize) -> &str {
        &self.tags[id]
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn outside_id(&self) -> usize {
        self.outside_id
    }

    /// Entity type suffixes, sorted alphabetically.
    pub fn entity_types(&self) -> &[String] {
        &self.entity_types
    }

    pub fn is_begin(&self, id: usize) -> bool {
        self.tags[id].starts_with("B-")
    }

    pub fn is_inside(&self, id: usize) -> bool {
        self.tags[id].starts_with("I-")
    }

    pub fn entity_type_of(&self, id: usize) -> Option<&str> {
        self.tags[id]
            .strip_prefix("B-")
            .or_else(|| self.tags[id].strip_prefix("I-"))
    }
}

/// Parsed corpus: sentences plus the tag set and vocabulary they index into.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub sentences: Vec<Sentence>,
    pub tagset: TagSet,
    pub vocab: Vocab,
}

impl Corpus {
    /// Re-index this corpus against another vocabulary and tag set (the
    /// model's, when evaluating). Unknown tokens map to unk; an unknown tag
    /// is an error because the model cannot score it.
    pub fn align_to(&self, vocab: &Vocab, tagset: &TagSet) -> Result<Corpus> {
        let mut sentences = Vec::with_capacity(self.sentences.len());
        for s in &self.sentences {
            let token_ids = s.tokens.iter().map(|t| vocab.lookup(t)).collect();
            let gold_tags = match &s.gold_tags {
                None => None,
                Some(ids) => {
                    let mut mapped = Vec::with_capacity(ids.len());
                    for &id in ids {
                        let tag = self.tagset.tag(id);
                        mapped.push(tagset.id(tag).ok_or_else(|| {
                            Error::Argument(format!("tag {tag:?} not present in the model tag set"))
                        })?);
                    }
                    Some(mapped)
                }
            };
            sentences.push(Sentence {
                tokens: s.tokens.clone(),
                token_ids,
                feature_ids: s.feature_ids.clone(),
                gold_tags,
            });
        }
        Ok(Corpus {
            sentences,
            tagset: tagset.clone(),
            vocab: vocab.clone(),
        })
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }
}

/// Build a corpus directly from (tokens, tags) string pairs. The tag set is
/// collected from the data (sorted), the vocabulary in first-appearance
/// order.
pub fn corpus_from_pairs(pairs: &[(Vec<String>, Vec<String>)], min_count: usize) -> Result<Corpus> {
    if pairs.is_empty() {
        return Err(Error::Argument("empty corpus".into()));
    }
    let mut tag_strings: Vec<String> = Vec::new();
    for (_, tags) in pairs {
        for t in tags {
            if !tag_strings.iter().any(|x| x == t) {
                tag_strings.push(t.clone());
            }
        }
    }
    tag_strings.sort();
    let tagset = TagSet::new(tag_strings)?;
    let vocab = Vocab::build(
        pairs.iter().flat_map(|(tokens, _)| tokens.iter()),
        min_count,
    );
    let mut sentences = Vec::with_capacity(pairs.len());
    for (tokens, tags) in pairs {
        if tokens.is_empty() || tokens.len() != tags.len() {
            return Err(Error::Argument("sentence with mismatched token/tag lengths".into()));
        }
        let token_ids = tokens.iter().map(|t| vocab.lookup(t)).collect();
        let feature_ids = tokens
            .iter()
            .map(|t| classify_feature(t).map(TokenFeature::id))
            .collect::<Result<Vec<_>>>()?;
        let gold_tags = tags
            .iter()
            .map(|t| tagset.id(t).expect("tag collected above"))
            .collect();
        sentences.push(Sentence {
            tokens: tokens.clone(),
            token_ids,
            feature_ids,
            gold_tags: Some(gold_tags),
        });
    }
    Ok(Corpus {
        sentences,
        tagset,
        vocab,
    })
}

/// Parse a CoNLL-style column file: whitespace-delimited columns, blank lines
/// between sentences, `-DOCSTART-` rows skipped. `token_col` and `tag_col`
/// are 0-based column indices.
pub fn parse_conll(text: &str, token_col: usize, tag_col: usize) -> Result<Corpus> {
    parse_conll_with(text, token_col, tag_col, 1)
}

pub fn parse_conll_with(
    text: &str,
    token_col: usize,
    tag_col: usize,
    min_count: usize,
) -> Result<Corpus> {
    let needed = token_col.max(tag_col) + 1;
    let mut pairs: Vec<(Vec<String>, Vec<String>)> = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut tags: Vec<String> = Vec::new();
    for (line_index, line) in text.lines().enumerate() {
        let line_no = line_index + 1;
        if line.trim().is_empty() {
            if !tokens.is_empty() {
                pairs.push((std::mem::take(&mut tokens), std::mem::take(&mut tags)));
            }
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols[0] == "-DOCSTART-" {
            continue;
        }
        if cols.len() < needed {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected at least {} columns, found {}", needed, cols.len()),
            });
        }
        tokens.push(cols[token_col].to_string());
        tags.push(cols[tag_col].to_string());
    }
    if !tokens.is_empty() {
        pairs.push((tokens, tags));
    }
    if pairs.is_empty() {
        return Err(Error::Argument("empty corpus: no sentences found".into()));
    }
    corpus_from_pairs(&pairs, min_count)
}

/// Render a corpus back to two-column text: `token<TAB>tag` lines with a
/// blank line after each sentence. `parse_conll(serialize_conll(c), 0, 1)`
/// reproduces `c`.
pub fn serialize_conll(corpus: &Corpus) -> String {
    let mut out = String::new();
    for s in &corpus.sentences {
        for (i, token) in s.tokens.iter().enumerate() {
            let tag = match &s.gold_tags {
                Some(ids) => corpus.tagset.tag(ids[i]),
                None => "O",
            };
            out.push_str(token);
            out.push('\t');
            out.push_str(tag);
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// A single IOB sequence violation at `index`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IobViolation {
    pub index: usize,
    pub kind: IobViolationKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IobViolationKind {
    /// "I-X" opens the sequence.
    InsideAtStart,
    /// "I-X" directly follows "O".
    InsideAfterOutside,
    /// "I-X" follows "B-Y" or "I-Y" with a different type Y.
    TypeChange,
}

/// Check an IOB tag sequence against the begin/inside chaining rules.
/// Tags must all be members of `tagset`.
pub fn validate_iob<S: AsRef<str>>(tags: &[S], tagset: &TagSet) -> Result<Vec<IobViolation>> {
    let mut ids = Vec::with_capacity(tags.len());
    for t in tags {
        let t = t.as_ref();
        ids.push(
            tagset
                .id(t)
                .ok_or_else(|| Error::Argument(format!("unknown tag {t:?}")))?,
        );
    }
    Ok(validate_iob_ids(&ids, tagset))
}

pub fn validate_iob_ids(ids: &[usize], tagset: &TagSet) -> Vec<IobViolation> {
    let mut violations = Vec::new();
    for (i, &id) in ids.iter().enumerate() {
        if !tagset.is_inside(id) {
            continue;
        }
        let ty = tagset.entity_type_of(id);
        if i == 0 {
            violations.push(IobViolation {
                index: 0,
                kind: IobViolationKind::InsideAtStart,
            });
            continue;
        }
        let prev = ids[i - 1];
        if prev == tagset.outside_id() {
            violations.push(IobViolation {
                index: i,
                kind: IobViolationKind::InsideAfterOutside,
            });
        } else if tagset.entity_type_of(prev) != ty {
            violations.push(IobViolation {
                index: i,
                kind: IobViolationKind::TypeChange,
            });
        }
    }
    violations
}

/// Aggregate counts over a corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sentences: usize,
    pub tokens: usize,
    pub entity_tokens: usize,
    /// entity_tokens / tokens.
    pub entity_frequency: f64,
    /// Entity-token counts per type, sorted by type name.
    pub per_type: Vec<(String, usize)>,
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut tokens = 0;
    let mut entity_tokens = 0;
    let mut per_type: Vec<(String, usize)> = corpus
        .tagset
        .entity_types()
        .iter()
        .map(|t| (t.clone(), 0))
        .collect();
    for s in &corpus.sentences {
        tokens += s.len();
        if let Some(ids) = &s.gold_tags {
            for &id in ids {
                if id != corpus.tagset.outside_id() {
                    entity_tokens += 1;
                    if let Some(ty) = corpus.tagset.entity_type_of(id) {
                        if let Some(slot) = per_type.iter_mut().find(|(name, _)| name == ty) {
                            slot.1 += 1;
                        }
                    }
                }
            }
        }
    }
    CorpusStats {
        sentences: corpus.sentences.len(),
        tokens,
        entity_tokens,
        entity_frequency: if tokens > 0 {
            entity_tokens as f64 / tokens as f64
        } else {
            0.0
        },
        per_type,
    }
}

impl CorpusStats {
    /// Aligned plain-text report.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<18} {:>10}", "sentences", self.sentences);
        let _ = writeln!(out, "{:<18} {:>10}", "tokens", self.tokens);
        let _ = writeln!(out, "{:<18} {:>10}", "entity tokens", self.entity_tokens);
        let _ = writeln!(
            out,
            "{:<18} {:>9.2}%",
            "entity frequency",
            100.0 * self.entity_frequency
        );
        for (ty, count) in &self.per_type {
            let _ = writeln!(out, "{:<18} {:>10}", format!("  {ty}"), count);
        }
        out
    }
}
