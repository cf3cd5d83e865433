//! Seeded synthetic corpus generator for end-to-end tests and demos.
//!
//! Sentences come from a fixed template inventory over three entity types
//! (PER, LOC, ORG) with small name pools, so the whole vocabulary stays
//! under 200 tokens. Templates are cycled deterministically (guaranteeing
//! every tag appears early) while slot fillers draw from the seeded RNG.
//! Entity mentions may span two tokens, exercising the I- tags.

use crate::data::{corpus_from_pairs, Corpus};
use crate::error::Result;
use crate::rng::Rng;

const PER_FIRST: [&str; 12] = [
    "Alice", "Bruno", "Carla", "Derek", "Elena", "Farid", "Greta", "Hugo", "Ines", "Jonas",
    "Katya", "Liam",
];
const PER_LAST: [&str; 8] = [
    "Carter", "Nguyen", "Okafor", "Petrov", "Quinn", "Rossi", "Sato", "Torres",
];
const LOC_SINGLE: [&str; 10] = [
    "Paris", "London", "Berlin", "Madrid", "Oslo", "Cairo", "Lima", "Tokyo", "Boston", "Geneva",
];
const LOC_PAIR: [(&str, &str); 3] = [("New", "York"), ("San", "Diego"), ("Hong", "Kong")];
const ORG_NAME: [&str; 8] = [
    "Acme", "Globex", "Initech", "Hooli", "Vertex", "Soylent", "Umbrella", "Cyberdyne",
];
const ORG_SUFFIX: [&str; 4] = ["Corp", "Labs", "Group", "Partners"];
const DAYS: [&str; 4] = ["monday", "wednesday", "friday", "sunday"];
const YEARS: [&str; 4] = ["1996", "2003", "2014", "2021"];

/// Template tokens: literals are emitted as-is with tag "O"; slot markers
/// expand to entity mentions with B-/I- tags (or O fillers for DAY/YEAR).
const TEMPLATES: [&[&str]; 8] = [
    &["{PER}", "visited", "{LOC}", "on", "{DAY}", "."],
    &["{PER}", "works", "for", "{ORG}", "in", "{LOC}", "."],
    &["{ORG}", "opened", "an", "office", "in", "{LOC}", "."],
    &["{PER}", "met", "{PER}", "at", "{ORG}", "."],
    &["analysts", "at", "{ORG}", "praised", "{PER}", "."],
    &["{PER}", "joined", "{ORG}", "in", "{YEAR}", "."],
    &["{LOC}", "welcomed", "{PER}", "last", "{DAY}", "."],
    &["the", "team", "from", "{LOC}", "beat", "{ORG}", "."],
];

fn push_entity(tokens: &mut Vec<String>, tags: &mut Vec<String>, mention: &[&str], ty: &str) {
    for (k, part) in mention.iter().enumerate() {
        tokens.push(part.to_string());
        tags.push(if k == 0 { format!("B-{ty}") } else { format!("I-{ty}") });
    }
}

fn fill_slot(slot: &str, tokens: &mut Vec<String>, tags: &mut Vec<String>, rng: &mut Rng) {
    match slot {
        "{PER}" => {
            let first = *rng.choose(&PER_FIRST);
            if rng.next_f64() < 0.5 {
                let last = *rng.choose(&PER_LAST);
                push_entity(tokens, tags, &[first, last], "PER");
            } else {
                push_entity(tokens, tags, &[first], "PER");
            }
        }
        "{LOC}" => {
            if rng.next_f64() < 0.3 {
                let (a, b) = *rng.choose(&LOC_PAIR);
                push_entity(tokens, tags, &[a, b], "LOC");
            } else {
                let loc = *rng.choose(&LOC_SINGLE);
                push_entity(tokens, tags, &[loc], "LOC");
            }
        }
        "{ORG}" => {
            let name = *rng.choose(&ORG_NAME);
            if rng.next_f64() < 0.5 {
                let suffix = *rng.choose(&ORG_SUFFIX);
                push_entity(tokens, tags, &[name, suffix], "ORG");
            } else {
                push_entity(tokens, tags, &[name], "ORG");
            }
        }
        "{DAY}" => {
            tokens.push(rng.choose(&DAYS).to_string());
            tags.push("O".into());
        }
        "{YEAR}" => {
            tokens.push(rng.choose(&YEARS).to_string());
            tags.push("O".into());
        }
        literal => {
            tokens.push(literal.to_string());
            tags.push("O".into());
        }
    }
}

/// Generate `count` tagged sentences.
pub fn generate(seed: u64, count: usize) -> Vec<(Vec<String>, Vec<String>)> {
    let mut rng = Rng::new(seed);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let template = TEMPLATES[i % TEMPLATES.len()];
        let mut tokens = Vec::new();
        let mut tags = Vec::new();
        for slot in template {
            fill_slot(slot, &mut tokens, &mut tags, &mut rng);
        }
        out.push((tokens, tags));
    }
    out
}

/// Generate a corpus of `count` sentences.
pub fn corpus(seed: u64, count: usize) -> Result<Corpus> {
    corpus_from_pairs(&generate(seed, count), 1)
}

/// Generate `total` sentences and split them into a training corpus of
/// `train_n` sentences and a dev corpus of the rest. The tag inventory
/// comes from the whole generation (both splits share it); the vocabulary
/// comes from the training slice only, so unseen dev tokens map to unk as
/// at real test time.
pub fn train_dev_split(seed: u64, total: usize, train_n: usize) -> Result<(Corpus, Corpus)> {
    assert!(train_n > 0 && train_n < total);
    let pairs = generate(seed, total);
    let full = corpus_from_pairs(&pairs, 1)?;
    let train_raw = corpus_from_pairs(&pairs[..train_n], 1)?;
    let train = train_raw.align_to(&train_raw.vocab, &full.tagset)?;
    let dev = corpus_from_pairs(&pairs[train_n..], 1)?.align_to(&train.vocab, &full.tagset)?;
    Ok((train, dev))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{corpus_stats, validate_iob};

    #[test]
    fn generation_is_seed_deterministic() {
        assert_eq!(generate(7, 30), generate(7, 30));
        assert_ne!(generate(7, 30), generate(8, 30));
    }

    #[test]
    fn fifty_sentences_three_types_small_vocab() {
        let c = corpus(1, 50).unwrap();
        assert_eq!(c.sentences.len(), 50);
        assert_eq!(c.tagset.entity_types(), ["LOC", "ORG", "PER"]);
        assert!(c.vocab.size() <= 200, "vocab {}", c.vocab.size());
        let stats = corpus_stats(&c);
        assert!(stats.entity_frequency > 0.1 && stats.entity_frequency < 0.6);
    }

    #[test]
    fn gold_tags_are_always_iob_valid() {
        let c = corpus(3, 50).unwrap();
        for s in &c.sentences {
            let tags: Vec<&str> = s
                .gold_tags
                .as_ref()
                .unwrap()
                .iter()
                .map(|&id| c.tagset.tag(id))
                .collect();
            assert!(validate_iob(&tags, &c.tagset).unwrap().is_empty());
        }
    }

    #[test]
    fn split_shares_tagset_and_maps_oov() {
        let (train, dev) = train_dev_split(2, 50, 40).unwrap();
        assert_eq!(train.sentences.len(), 40);
        assert_eq!(dev.sentences.len(), 10);
        assert_eq!(train.tagset.tags(), dev.tagset.tags());
        // dev tokens index into the training vocabulary
        for s in &dev.sentences {
            for &id in &s.token_ids {
                assert!(id < train.vocab.size());
            }
        }
    }
}
