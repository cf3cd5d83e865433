//! End-to-end tests of the `astral` binary: exit codes, file outputs,
//! determinism, and the tagging example.

use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_astral");

const EU_CONLL: &str = "\
EU B-ORG
rejects O
German B-MISC
call O
to O
boycott O
British B-MISC
lamb O
";

fn run(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().unwrap()
}

#[test]
fn missing_train_file_exits_2_with_path() {
    let out = run(&["train", "--set", "train_path=/no/such/file.conll"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("/no/such/file.conll"), "{stderr}");
}

#[test]
fn missing_train_path_key_exits_1() {
    let out = run(&["train"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_config_key_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{\"epochz\": 3}").unwrap();
    let out = run(&["train", "--config", &cfg.to_string_lossy()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field"));
}

#[test]
fn bad_adv_target_exits_1_naming_valid_targets() {
    let out = run(&["train", "--set", "adv_targets=[\"Q\"]"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("E_prime") && stderr.contains("H_prime"), "{stderr}");
}

/// Train a small model on the corpus text, returning the checkpoint path.
fn train_small(dir: &Path, corpus: &str, extra: &[(&str, &str)]) -> String {
    let train_path = dir.join("train.conll");
    std::fs::write(&train_path, corpus).unwrap();
    let ckpt = dir.join("model.ckpt");
    let mut args = vec![
        "train".to_string(),
        "--set".into(),
        format!("train_path={}", train_path.to_string_lossy()),
        "--set".into(),
        format!("output_dir={}", dir.to_string_lossy()),
        "--set".into(),
        format!("checkpoint_path={}", ckpt.to_string_lossy()),
        "--set".into(),
        "word_dim=10".into(),
        "--set".into(),
        "feat_dim=5".into(),
        "--set".into(),
        "hidden_dim=8".into(),
        "--set".into(),
        "learning_rate=0.05".into(),
        "--set".into(),
        "momentum=0.5".into(),
        "--set".into(),
        "epochs=120".into(),
        "--set".into(),
        "eval_every=10".into(),
        "--set".into(),
        "early_stop_patience=4".into(),
    ];
    for (k, v) in extra {
        args.push("--set".into());
        args.push(format!("{k}={v}"));
    }
    let out = Command::new(BIN).args(&args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    ckpt.to_string_lossy().into_owned()
}

#[test]
fn overfit_then_tag_reproduces_the_gold_tags() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = train_small(dir.path(), EU_CONLL, &[]);

    let input = dir.path().join("input.txt");
    std::fs::write(&input, "EU rejects German call to boycott British lamb\n").unwrap();
    let out = run(&["tag", "--checkpoint", &ckpt, "--input", &input.to_string_lossy()]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    let tags: Vec<&str> = stdout
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| l.split('\t').nth(1).unwrap())
        .collect();
    assert_eq!(tags, ["B-ORG", "O", "B-MISC", "O", "O", "O", "B-MISC", "O"]);
}

#[test]
fn tag_skips_empty_lines_with_warning_and_validates_iob() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = train_small(dir.path(), EU_CONLL, &[("epochs", "5"), ("eval_every", "1")]);
    let input = dir.path().join("input.txt");
    std::fs::write(&input, "EU rejects German\n\nBritish lamb to Zanzibar\n").unwrap();
    let out = run(&["tag", "--checkpoint", &ckpt, "--input", &input.to_string_lossy()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("skipping empty input line 2"));

    // decoded output is always IOB-valid, even for unseen tokens
    let stdout = String::from_utf8(out.stdout).unwrap();
    let corpus = astral_core::data::parse_conll(&stdout, 0, 1).unwrap();
    for s in &corpus.sentences {
        let tags: Vec<&str> = s
            .gold_tags
            .as_ref()
            .unwrap()
            .iter()
            .map(|&id| corpus.tagset.tag(id))
            .collect();
        assert!(astral_core::data::validate_iob(&tags, &corpus.tagset).unwrap().is_empty());
    }
}

#[test]
fn tag_empty_input_produces_empty_output_and_exit_0() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = train_small(dir.path(), EU_CONLL, &[("epochs", "5"), ("eval_every", "1")]);
    let input = dir.path().join("empty.txt");
    std::fs::write(&input, "").unwrap();
    let out = run(&["tag", "--checkpoint", &ckpt, "--input", &input.to_string_lossy()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
}

#[test]
fn eval_after_overfit_reports_high_f1_and_valid_metrics_file() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = train_small(dir.path(), EU_CONLL, &[]);
    let json = dir.path().join("metrics.json");
    let corpus = dir.path().join("train.conll");
    let out = run(&[
        "eval",
        "--checkpoint",
        &ckpt,
        "--corpus",
        &corpus.to_string_lossy(),
        "--json",
        &json.to_string_lossy(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let token = &metrics["token"]["overall"];
    let (p, r, f1) = (
        token["precision"].as_f64().unwrap(),
        token["recall"].as_f64().unwrap(),
        token["f1"].as_f64().unwrap(),
    );
    assert!(f1 >= 0.99, "token F1 {f1}");
    // the file satisfies the F1 formula
    assert!((f1 - 2.0 * p * r / (p + r)).abs() < 1e-12);
    // per-type rows match the tag set's entity types
    let per_type = metrics["token"]["per_type"].as_object().unwrap();
    let mut types: Vec<&str> = per_type.keys().map(String::as_str).collect();
    types.sort_unstable();
    assert_eq!(types, ["MISC", "ORG"]);
}

#[test]
fn eval_tagset_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = train_small(dir.path(), EU_CONLL, &[("epochs", "5"), ("eval_every", "1")]);
    let other = dir.path().join("other.conll");
    std::fs::write(&other, "Rome B-GPE\nfell O\n").unwrap();
    let out = run(&["eval", "--checkpoint", &ckpt, "--corpus", &other.to_string_lossy()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stats_reports_hand_counted_frequency() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.conll");
    std::fs::write(&corpus, EU_CONLL).unwrap();
    let json = dir.path().join("stats.json");
    let out = run(&[
        "stats",
        "--corpus",
        &corpus.to_string_lossy(),
        "--json",
        &json.to_string_lossy(),
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("37.50%"), "{stdout}");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["tokens"], 8);
    assert_eq!(v["entity_tokens"], 3);
}

#[test]
fn same_seed_runs_are_byte_identical_and_env_seed_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let train_path = dir.path().join("train.conll");
    std::fs::write(&train_path, EU_CONLL).unwrap();
    let mut logs = Vec::new();
    for (run, env_seed) in [("a", None), ("b", None), ("c", Some("7"))] {
        let out_dir = dir.path().join(run);
        let mut cmd = Command::new(BIN);
        cmd.args(["train"])
            .args(["--set", &format!("train_path={}", train_path.to_string_lossy())])
            .args(["--set", &format!("output_dir={}", out_dir.to_string_lossy())])
            .args(["--set", "epochs=3"])
            .args(["--set", "word_dim=6"])
            .args(["--set", "feat_dim=3"])
            .args(["--set", "hidden_dim=4"]);
        match env_seed {
            Some(seed) => {
                cmd.env("ASTRAL_SEED", seed);
            }
            None => {
                cmd.env_remove("ASTRAL_SEED");
            }
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        logs.push(std::fs::read(out_dir.join("log.jsonl")).unwrap());
    }
    assert_eq!(logs[0], logs[1], "same seed must give byte-identical logs");
    assert_ne!(logs[0], logs[2], "ASTRAL_SEED must override the configured seed");
}

#[test]
fn help_lists_every_config_key_with_default() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let golden = include_str!("golden/help.txt");
    assert_eq!(text, golden, "--help drifted from tests/golden/help.txt");
}

#[test]
fn config_defaults_matches_golden() {
    let out = run(&["config", "--defaults"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let golden = include_str!("golden/config_defaults.json");
    assert_eq!(text, golden, "config --defaults drifted from the golden file");
}

#[test]
fn gradcheck_command_exits_0() {
    let out = run(&["gradcheck", "--seeds", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("all 18 checks passed"));
}
