//! Training-loop and checkpoint behavior on the synthetic corpus.

use astral_core::checkpoint::{Checkpoint, FORMAT_VERSION};
use astral_core::error::Error;
use astral_core::model::ModelConfig;
use astral_core::synth;
use astral_core::train::{
    evaluate_token_f1, render_curves_csv, train, TrainConfig, Trainer,
};

fn small_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        model: ModelConfig {
            word_dim: 8,
            feat_dim: 4,
            hidden_dim: 6,
            ..ModelConfig::default()
        },
        ..TrainConfig::default()
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_bit_identical() {
    let (train_corpus, dev_corpus) = synth::train_dev_split(1, 20, 16).unwrap();
    let mut config = small_config(3);
    config.learning_rate = 0.0;
    let mut trainer = Trainer::new(config, train_corpus, dev_corpus, None).unwrap();
    let before = trainer.model.param_values();
    for _ in 0..3 {
        trainer.run_epoch().unwrap();
    }
    let after = trainer.model.param_values();
    assert_eq!(before.len(), after.len());
    for ((name_a, a), (_, b)) in before.iter().zip(&after) {
        assert_eq!(a, b, "parameter {name_a} moved under lr 0");
    }
}

#[test]
fn same_seed_gives_identical_histories() {
    let (train_corpus, dev_corpus) = synth::train_dev_split(2, 20, 16).unwrap();
    let config = small_config(4);
    let a = train(&config, &train_corpus, &dev_corpus, None).unwrap();
    let b = train(&config, &train_corpus, &dev_corpus, None).unwrap();
    assert_eq!(render_curves_csv(&a.history), render_curves_csv(&b.history));
    let mut other_seed = config.clone();
    other_seed.seed = 7;
    let c = train(&other_seed, &train_corpus, &dev_corpus, None).unwrap();
    assert_ne!(render_curves_csv(&a.history), render_curves_csv(&c.history));
}

#[test]
fn disabled_adversarial_training_never_calls_the_module() {
    let (train_corpus, dev_corpus) = synth::train_dev_split(3, 16, 12).unwrap();
    let mut config = small_config(2);
    config.use_at = false;
    let outcome = train(&config, &train_corpus, &dev_corpus, None).unwrap();
    assert_eq!(outcome.adv_invocations, 0);

    config.use_at = true;
    let outcome = train(&config, &train_corpus, &dev_corpus, None).unwrap();
    assert_eq!(outcome.adv_invocations, 2 * train_corpus.sentences.len());
}

#[test]
fn first_epoch_loss_finite_and_loss_decreases_by_epoch_10() {
    let (train_corpus, dev_corpus) = synth::train_dev_split(4, 30, 24).unwrap();
    for (use_gc, use_at) in [(false, false), (true, false), (false, true), (true, true)] {
        let mut config = small_config(10);
        config.model.use_gc = use_gc;
        config.use_at = use_at;
        config.early_stop_patience = 100;
        let outcome = train(&config, &train_corpus, &dev_corpus, None).unwrap();
        assert!(outcome.aborted.is_none());
        let first = outcome.history.first().unwrap().train_loss;
        let tenth = outcome.history.last().unwrap().train_loss;
        assert!(first.is_finite());
        assert!(
            tenth < first,
            "gc={use_gc} at={use_at}: loss went {first} -> {tenth}"
        );
    }
}

#[test]
fn early_stopping_respects_patience() {
    let (train_corpus, dev_corpus) = synth::train_dev_split(5, 16, 12).unwrap();
    let mut config = small_config(200);
    config.learning_rate = 0.0; // dev F1 can never improve after the first eval
    config.early_stop_patience = 3;
    let outcome = train(&config, &train_corpus, &dev_corpus, None).unwrap();
    // first eval sets the best; the next 3 non-improving evals stop the run
    assert_eq!(outcome.history.len(), 4);
}

#[test]
fn checkpoint_roundtrip_is_byte_exact_and_preserves_dev_f1() {
    let (train_corpus, dev_corpus) = synth::train_dev_split(6, 20, 16).unwrap();
    let config = small_config(3);
    let outcome = train(&config, &train_corpus, &dev_corpus, None).unwrap();

    let bytes = outcome.checkpoint.to_bytes().unwrap();
    let reloaded = Checkpoint::from_bytes(&bytes).unwrap();
    let bytes_again = reloaded.to_bytes().unwrap();
    assert_eq!(bytes, bytes_again, "save → load → save changed bytes");

    let mut model = reloaded.build_model().unwrap();
    let f1 = evaluate_token_f1(&mut model, &dev_corpus).unwrap();
    assert_eq!(f1, outcome.best_dev_f1, "dev F1 changed across the roundtrip");
}

#[test]
fn corrupted_checkpoint_fails_the_checksum() {
    let (train_corpus, dev_corpus) = synth::train_dev_split(7, 12, 10).unwrap();
    let config = small_config(1);
    let outcome = train(&config, &train_corpus, &dev_corpus, None).unwrap();
    let mut bytes = outcome.checkpoint.to_bytes().unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    match Checkpoint::from_bytes(&bytes) {
        Err(Error::CheckpointChecksum { .. }) => {}
        other => panic!("expected checksum error, got {other:?}"),
    }
}

#[test]
fn future_version_names_both_versions() {
    let (train_corpus, dev_corpus) = synth::train_dev_split(8, 12, 10).unwrap();
    let config = small_config(1);
    let outcome = train(&config, &train_corpus, &dev_corpus, None).unwrap();
    let mut bytes = outcome.checkpoint.to_bytes().unwrap();
    let future = (FORMAT_VERSION + 1).to_le_bytes();
    bytes[4..8].copy_from_slice(&future);
    match Checkpoint::from_bytes(&bytes) {
        Err(Error::CheckpointVersion { found, expected }) => {
            assert_eq!(found, FORMAT_VERSION + 1);
            assert_eq!(expected, FORMAT_VERSION);
        }
        other => panic!("expected version error, got {other:?}"),
    }
}

#[test]
fn truncated_checkpoint_is_a_format_error() {
    let (train_corpus, dev_corpus) = synth::train_dev_split(9, 12, 10).unwrap();
    let config = small_config(1);
    let outcome = train(&config, &train_corpus, &dev_corpus, None).unwrap();
    let bytes = outcome.checkpoint.to_bytes().unwrap();
    match Checkpoint::from_bytes(&bytes[..10]) {
        Err(Error::CheckpointFormat(_)) => {}
        other => panic!("expected format error, got {other:?}"),
    }
}

#[test]
fn curves_have_one_record_per_epoch() {
    let (train_corpus, dev_corpus) = synth::train_dev_split(10, 16, 12).unwrap();
    let mut config = small_config(5);
    config.early_stop_patience = 100;
    let outcome = train(&config, &train_corpus, &dev_corpus, None).unwrap();
    let csv = render_curves_csv(&outcome.history);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,train_f1,dev_f1");
    assert_eq!(lines.len(), 1 + 5);
    for (i, line) in lines[1..].iter().enumerate() {
        assert!(line.starts_with(&format!("{},", i + 1)));
    }
}
