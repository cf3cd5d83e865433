//! Subcommand implementations. All user-facing errors funnel into
//! [`astral_core::Error`]; `main` maps them onto the exit-code scheme
//! (1 config, 2 data, 3 numeric).

use crate::config::RunConfig;
use astral_core::checkpoint::Checkpoint;
use astral_core::data::{corpus_stats, parse_conll_with, Corpus, Sentence};
use astral_core::embedding::{load_pretrained, Pretrained};
use astral_core::error::{Error, Result};
use astral_core::eval::{SpanCounter, TokenCounter};
use astral_core::gradcheck;
use astral_core::model::Model;
use astral_core::train::{ablation_run, render_curves_csv, render_log_jsonl, train};
use serde_json::json;
use std::io::BufRead;
use std::path::{Path, PathBuf};

fn read_file(path: &str) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Argument(format!("cannot read {path}: {e}")))
}

fn load_corpus(path: &str, cfg: &RunConfig) -> Result<Corpus> {
    parse_conll_with(&read_file(path)?, cfg.token_col, cfg.tag_col, cfg.min_count)
}

fn load_embeddings(cfg: &RunConfig) -> Result<Option<Pretrained>> {
    match &cfg.embeddings_path {
        None => Ok(None),
        Some(path) => {
            let p = load_pretrained(Path::new(path))
                .map_err(|e| Error::Argument(format!("embeddings {path}: {e}")))?;
            Ok(Some(p))
        }
    }
}

struct TrainData {
    train: Corpus,
    dev: Corpus,
    pretrained: Option<Pretrained>,
}

/// Load training and dev corpora. Without a dev path the training corpus
/// doubles as the dev set (overfit runs).
fn load_train_data(cfg: &RunConfig) -> Result<TrainData> {
    let train_path = cfg
        .train_path
        .as_ref()
        .ok_or_else(|| Error::Config("train_path is not set".into()))?;
    let train = load_corpus(train_path, cfg)?;
    let dev = match &cfg.dev_path {
        Some(path) => load_corpus(path, cfg)?.align_to(&train.vocab, &train.tagset)?,
        None => train.clone(),
    };
    Ok(TrainData {
        train,
        dev,
        pretrained: load_embeddings(cfg)?,
    })
}

fn write_output(dir: &str, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = Path::new(dir).join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<i32> {
    let train_config = cfg.to_train_config()?;
    let data = load_train_data(cfg)?;
    let outcome = train(&train_config, &data.train, &data.dev, data.pretrained.as_ref())?;

    let checkpoint_path = match &cfg.checkpoint_path {
        Some(p) => PathBuf::from(p),
        None => {
            std::fs::create_dir_all(&cfg.output_dir)?;
            Path::new(&cfg.output_dir).join("model.ckpt")
        }
    };
    outcome.checkpoint.save(&checkpoint_path)?;
    let curves = write_output(&cfg.output_dir, "curves.csv", &render_curves_csv(&outcome.history))?;
    let log = write_output(&cfg.output_dir, "log.jsonl", &render_log_jsonl(&outcome.history)?)?;

    for record in &outcome.history {
        eprintln!(
            "epoch {:>4}  loss {:>9.5}  train F1 {:.4}  dev F1 {:.4}  ({:.2}s)",
            record.epoch, record.train_loss, record.train_f1, record.dev_f1, record.wall_time
        );
    }
    println!(
        "trained {} epochs, best dev F1 {:.4}",
        outcome.history.len(),
        outcome.best_dev_f1
    );
    println!("checkpoint: {}", checkpoint_path.display());
    println!("curves:     {}", curves.display());
    println!("log:        {}", log.display());
    if let Some(reason) = outcome.aborted {
        eprintln!("training aborted on non-finite loss: {reason}");
        eprintln!("last good checkpoint retained at {}", checkpoint_path.display());
        return Ok(3);
    }
    Ok(0)
}

pub fn cmd_ablate(cfg: &RunConfig) -> Result<i32> {
    let train_config = cfg.to_train_config()?;
    let data = load_train_data(cfg)?;
    let report = ablation_run(&train_config, &data.train, &data.dev, data.pretrained.as_ref())?;
    print!("{}", report.render_table());
    let path = write_output(&cfg.output_dir, "ablation.json", &serde_json::to_string_pretty(&report)?)?;
    println!("report: {}", path.display());
    Ok(0)
}

fn load_model(checkpoint: &str) -> Result<Model> {
    let cp = Checkpoint::load(Path::new(checkpoint))?;
    cp.build_model()
}

pub fn cmd_tag(checkpoint: &str, input: &str, output: Option<&str>) -> Result<i32> {
    let mut model = load_model(checkpoint)?;
    // tagging always decodes under the IOB chaining constraints
    let tagset = model.tagset.clone();
    model.crf.apply_iob_constraints(&tagset)?;

    let text = if input == "-" {
        let mut buf = String::new();
        for line in std::io::stdin().lock().lines() {
            buf.push_str(&line?);
            buf.push('\n');
        }
        buf
    } else {
        read_file(input)?
    };

    let mut out = String::new();
    for (index, line) in text.lines().enumerate() {
        let tokens: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        if tokens.is_empty() {
            eprintln!("warning: skipping empty input line {}", index + 1);
            continue;
        }
        let sentence = Sentence::from_raw_tokens(tokens, &model.vocab)?;
        let path = model.decode(&sentence)?;
        for (token, &tag) in sentence.tokens.iter().zip(&path) {
            out.push_str(token);
            out.push('\t');
            out.push_str(model.tagset.tag(tag));
            out.push('\n');
        }
        out.push('\n');
    }
    match output {
        Some(path) => std::fs::write(path, out)?,
        None => print!("{out}"),
    }
    Ok(0)
}

pub fn cmd_eval(
    checkpoint: &str,
    corpus_path: &str,
    token_col: usize,
    tag_col: usize,
    json_path: &str,
) -> Result<i32> {
    let mut model = load_model(checkpoint)?;
    let raw = parse_conll_with(&read_file(corpus_path)?, token_col, tag_col, 1)?;
    let corpus = raw.align_to(&model.vocab, &model.tagset)?;

    let mut token_counter = TokenCounter::new();
    let mut span_counter = SpanCounter::new();
    for sentence in &corpus.sentences {
        let gold = sentence
            .gold_tags
            .as_ref()
            .ok_or_else(|| Error::Argument("corpus sentence lacks gold tags".into()))?;
        let pred = model.decode(sentence)?;
        token_counter.observe(&pred, gold, &corpus.tagset)?;
        span_counter.observe(&pred, gold, &corpus.tagset)?;
    }
    let token_metrics = token_counter.metrics();
    let entity_metrics = span_counter.metrics();

    println!("token-level:");
    print!("{}", token_metrics.render_table(&corpus.tagset));
    println!();
    println!("entity-level (exact spans):");
    print!("{}", entity_metrics.render_table(&corpus.tagset));

    let blob = json!({
        "token": token_metrics,
        "entity": entity_metrics,
    });
    std::fs::write(json_path, serde_json::to_string_pretty(&blob)?)?;
    println!("\nmetrics written to {json_path}");
    Ok(0)
}

pub fn cmd_stats(corpus_path: &str, token_col: usize, tag_col: usize, json_path: Option<&str>) -> Result<i32> {
    let corpus = parse_conll_with(&read_file(corpus_path)?, token_col, tag_col, 1)?;
    let stats = corpus_stats(&corpus);
    print!("{}", stats.render_text());
    if let Some(path) = json_path {
        std::fs::write(path, serde_json::to_string_pretty(&stats)?)?;
        println!("stats written to {path}");
    }
    Ok(0)
}

pub fn cmd_gradcheck(seeds: u64, step: f64, tolerance: f64) -> Result<i32> {
    let seed_list: Vec<u64> = (0..seeds).collect();
    let checks = gradcheck::check_all_layers(step, tolerance, &seed_list)?;
    print!("{}", gradcheck::render_report(&checks));
    let failed = checks.iter().filter(|c| !c.passed()).count();
    if failed > 0 {
        eprintln!("{failed} layer checks failed at tolerance {tolerance}");
        return Ok(1);
    }
    println!("all {} checks passed at tolerance {tolerance}", checks.len());
    Ok(0)
}

pub fn cmd_config(cfg: &RunConfig) -> Result<i32> {
    println!("{}", serde_json::to_string_pretty(cfg)?);
    Ok(0)
}
