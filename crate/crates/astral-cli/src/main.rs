//! `astral` — train, tag and evaluate the gated-CNN/Bi-LSTM/CRF sequence
//! tagger from the command line.

mod commands;
mod config;

use astral_core::error::Error;
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "astral",
    version,
    about = "Neural sequence tagger: embedding → gated CNN → Bi-LSTM → gated CNN → CRF,\n\
             trained with optional normalized adversarial perturbations.",
    long_about = None
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a config file and write checkpoint, curves and log
    Train {
        /// JSON config file (strict keys; see the list below)
        #[arg(long)]
        config: Option<String>,
        /// Override one config key, e.g. --set epochs=50 (repeatable)
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Tag sentences (one whitespace-tokenized sentence per line)
    Tag {
        #[arg(long)]
        checkpoint: String,
        /// Input file, or "-" for stdin
        #[arg(long)]
        input: String,
        /// Output file (stdout when omitted)
        #[arg(long)]
        output: Option<String>,
    },
    /// Evaluate a checkpoint against a gold corpus
    Eval {
        #[arg(long)]
        checkpoint: String,
        /// CoNLL-style gold corpus
        #[arg(long)]
        corpus: String,
        #[arg(long, default_value_t = 0)]
        token_col: usize,
        #[arg(long, default_value_t = 1)]
        tag_col: usize,
        /// Where to write the machine-readable metrics
        #[arg(long, default_value = "metrics.json")]
        json: String,
    },
    /// Train the four conditions Basic/GC/AT/ATGC and report dev F1
    Ablate {
        #[arg(long)]
        config: Option<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Corpus statistics (sentences, tokens, entity frequency, per type)
    Stats {
        #[arg(long)]
        corpus: String,
        #[arg(long, default_value_t = 0)]
        token_col: usize,
        #[arg(long, default_value_t = 1)]
        tag_col: usize,
        /// Also write the stats as JSON to this path
        #[arg(long)]
        json: Option<String>,
    },
    /// Finite-difference gradient checks across every layer type
    Gradcheck {
        /// Number of seeds per layer
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// Finite-difference step
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        /// Maximum accepted relative error
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Print the effective configuration as JSON
    Config {
        #[arg(long)]
        config: Option<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Print the built-in defaults, ignoring --config and --set
        #[arg(long)]
        defaults: bool,
    },
}

/// Build the effective config: file, then --set overrides, then the
/// ASTRAL_SEED environment variable (which always wins for the seed).
fn effective_config(path: Option<&str>, overrides: &[String]) -> Result<RunConfig, Error> {
    let mut cfg = match path {
        Some(p) => RunConfig::from_file(std::path::Path::new(p))?,
        None => RunConfig::default(),
    };
    for spec in overrides {
        cfg.apply_override(spec)?;
    }
    if let Ok(seed) = std::env::var("ASTRAL_SEED") {
        cfg.seed = seed
            .parse()
            .map_err(|_| Error::Config(format!("ASTRAL_SEED {seed:?} is not a u64")))?;
    }
    Ok(cfg)
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 1,
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

fn run() -> Result<i32, Error> {
    let after_help = format!(
        "Configuration keys and defaults (JSON config file and --set):\n{}\n\
         Environment: ASTRAL_SEED overrides the configured seed.\n\
         Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric abort.",
        RunConfig::describe_defaults()
    );
    let matches = Cli::command().after_help(after_help).get_matches();
    let cli = Cli::from_arg_matches(&matches).expect("clap parsed the arguments");

    match cli.command {
        Command::Train { config, overrides } => {
            let cfg = effective_config(config.as_deref(), &overrides)?;
            commands::cmd_train(&cfg)
        }
        Command::Tag { checkpoint, input, output } => {
            commands::cmd_tag(&checkpoint, &input, output.as_deref())
        }
        Command::Eval { checkpoint, corpus, token_col, tag_col, json } => {
            commands::cmd_eval(&checkpoint, &corpus, token_col, tag_col, &json)
        }
        Command::Ablate { config, overrides } => {
            let cfg = effective_config(config.as_deref(), &overrides)?;
            commands::cmd_ablate(&cfg)
        }
        Command::Stats { corpus, token_col, tag_col, json } => {
            commands::cmd_stats(&corpus, token_col, tag_col, json.as_deref())
        }
        Command::Gradcheck { seeds, step, tolerance } => {
            commands::cmd_gradcheck(seeds, step, tolerance)
        }
        Command::Config { config, overrides, defaults } => {
            let cfg = if defaults {
                RunConfig::default()
            } else {
                effective_config(config.as_deref(), &overrides)?
            };
            commands::cmd_config(&cfg)
        }
    }
}

fn main() {
    match run() {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(exit_code_for(&err));
        }
    }
}
