//! Cross-module invariants and randomized properties.

use astral_core::adversarial::compute_r_adv;
use astral_core::crf::{Crf, Emissions};
use astral_core::data::{classify_feature, parse_conll, serialize_conll, validate_iob_ids, TagSet};
use astral_core::model::{Model, ModelConfig};
use astral_core::rng::Rng;
use astral_core::synth;
use astral_core::tensor::{init, InitScheme, Tensor};
use proptest::prelude::*;

fn tensor_strategy(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    proptest::collection::vec(-10.0..10.0f64, rows * cols)
        .prop_map(move |data| Tensor::from_vec(&[rows, cols], data).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matmul_is_associative_within_1e9(
        a in tensor_strategy(4, 3),
        b in tensor_strategy(3, 5),
        c in tensor_strategy(5, 2),
    ) {
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        for (x, y) in left.data().iter().zip(right.data()) {
            prop_assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn classifier_is_total_over_nonempty_strings(token in "[\\PC]{1,12}") {
        // any non-empty string of printable unicode classifies into one of
        // the five classes without error
        let feature = classify_feature(&token).unwrap();
        prop_assert!(feature.id() < astral_core::data::NUM_FEATURES);
    }

    #[test]
    fn r_adv_is_epsilon_homogeneous(
        x in tensor_strategy(3, 4),
        d in tensor_strategy(3, 4),
        epsilon in 0.0..0.5f64,
    ) {
        let r1 = compute_r_adv(&x, &d, epsilon, 1e-12).unwrap();
        let r2 = compute_r_adv(&x, &d, 2.0 * epsilon, 1e-12).unwrap();
        for (a, b) in r1.data().iter().zip(r2.data()) {
            prop_assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn conll_parse_serialize_is_a_fixed_point(
        sentences in proptest::collection::vec(
            proptest::collection::vec(("[a-zA-Z0-9.]{1,8}", 0usize..5), 1..6),
            1..5,
        )
    ) {
        let tag_names = ["O", "B-PER", "I-PER", "B-LOC", "I-LOC"];
        let mut text = String::new();
        for sentence in &sentences {
            for (token, tag_idx) in sentence {
                // keep gold sequences structurally valid: I- tags only ever
                // follow their B- tag in this generator
                text.push_str(token);
                text.push(' ');
                text.push_str(tag_names[tag_idx % tag_names.len()]);
                text.push('\n');
            }
            text.push('\n');
        }
        // normalize I-X openers so the tag set stays IOB-parseable
        let corpus = match parse_conll(&text, 0, 1) {
            Ok(c) => c,
            Err(_) => return Ok(()), // generator may omit a matching B- tag
        };
        let serialized = serialize_conll(&corpus);
        let reparsed = parse_conll(&serialized, 0, 1).unwrap();
        prop_assert_eq!(&corpus.sentences, &reparsed.sentences);
        prop_assert_eq!(corpus.tagset.tags(), reparsed.tagset.tags());
        prop_assert_eq!(serialize_conll(&reparsed), serialized);
    }
}

#[test]
fn nll_nonnegative_and_bounds_paths() {
    let mut rng = Rng::new(77);
    for _ in 0..200 {
        let n = 1 + rng.below(5);
        let l = 1 + rng.below(4);
        let mut crf = Crf::new(2, l, &mut rng).unwrap();
        let scores = init(&[n, l], InitScheme::Uniform { lo: -3.0, hi: 3.0 }, &mut rng);
        let e = Emissions { scores };
        let gold: Vec<usize> = (0..n).map(|_| rng.below(l)).collect();
        let nll = crf.nll(&e, &gold).unwrap();
        assert!(nll >= 0.0, "nll {nll}");
        let p = (-nll).exp();
        assert!(p > 0.0 && p <= 1.0, "gold path probability {p}");
        // the log-partition dominates every single path, the Viterbi path
        // in particular
        let (_, viterbi_score) = crf.viterbi_decode(&e);
        assert!(crf.log_partition(&e) >= viterbi_score - 1e-12);
    }
}

#[test]
fn constrained_model_decoding_is_always_iob_valid() {
    // full-pipeline version of the per-module property: random models,
    // random sentences, decode under constraints, validate
    let (train, _) = synth::train_dev_split(5, 50, 40).unwrap();
    for seed in 0..5 {
        let config = ModelConfig {
            word_dim: 6,
            feat_dim: 3,
            hidden_dim: 4,
            use_gc: seed % 2 == 0,
            ..ModelConfig::default()
        };
        let mut model = Model::new(
            config,
            train.vocab.clone(),
            train.tagset.clone(),
            None,
            &mut Rng::new(seed),
        )
        .unwrap();
        for sentence in &train.sentences {
            let path = model.decode(sentence).unwrap();
            let violations = validate_iob_ids(&path, &train.tagset);
            assert!(violations.is_empty(), "decode violated IOB: {violations:?}");
        }
    }
}

#[test]
fn gate_suppression_shuts_the_spatial_branch() {
    use astral_core::gcnn::{GatedCnn, GatedCnnConfig};
    use astral_core::layer::Layer;
    let mut rng = Rng::new(3);
    let mut block = GatedCnn::new(GatedCnnConfig::with_defaults(3, 3), &mut rng).unwrap();
    block.glu.set_param("b2", Tensor::filled(&[3], -50.0));
    let x = init(&[3, 5], InitScheme::Uniform { lo: -2.0, hi: 2.0 }, &mut rng);
    let out = block.forward(&x).unwrap();
    let gated = out.row_slice(3, 6).unwrap();
    assert!(gated.data().iter().all(|&v| v.abs() < 1e-20));
    // the input remains recoverable from the top rows
    assert_eq!(out.row_slice(0, 3).unwrap(), x);
}

#[test]
fn entity_types_partition_tagset() {
    let tagset = TagSet::new(vec![
        "B-LOC".into(),
        "B-ORG".into(),
        "B-PER".into(),
        "I-LOC".into(),
        "I-ORG".into(),
        "I-PER".into(),
        "O".into(),
    ])
    .unwrap();
    assert_eq!(tagset.entity_types(), ["LOC", "ORG", "PER"]);
    assert_eq!(tagset.outside_id(), tagset.id("O").unwrap());
}
