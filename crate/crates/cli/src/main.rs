//! Command-line front end: `gen-data`, `train`, `eval`, `retrieve`,
//! `shape-metrics` and `report`.
//!
//! Exit codes: 0 on success, 1 for invalid configuration or arguments,
//! 2 for runtime failures (unreadable data, divergence, ...).

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trimodal::experiment::{
    cmd_eval, cmd_gen_data, cmd_report, cmd_retrieve, cmd_shape_metrics, cmd_train, format_ranked,
    format_shape_metrics, ExperimentConfig, CHECKPOINT_FILE,
};
use trimodal::metrics::format_table;
use trimodal::retrieval::Strategy;
use trimodal::Error;

#[derive(Parser, Debug)]
#[command(
    name = "trimodal",
    version,
    about = "Train and evaluate text / image / voxel joint embeddings"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// TOML experiment config; unset keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set training.batch_size=256`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Shorthand for `--set seed=N`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Shorthand for `--set output_dir=DIR`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic dataset into the data directory.
    GenData,
    /// Train and write the best checkpoint plus the epoch history.
    Train,
    /// Evaluate checkpoints; several checkpoints are aggregated as mean ± se.
    Eval {
        /// Checkpoint to evaluate (repeatable); defaults to the run's own checkpoint.
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
    },
    /// Rank the evaluation split for a caption.
    Retrieve {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// One of I, V, I+V.
        #[arg(long, default_value = "I+V")]
        strategy: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Print one JSON object instead of a table.
        #[arg(long)]
        json: bool,
        /// Caption words.
        #[arg(required = true)]
        caption: Vec<String>,
    },
    /// Compare two OBJ meshes with F1^τ, Chamfer distance and normal consistency.
    ShapeMetrics { gt: PathBuf, ret: PathBuf },
    /// Merge eval CSV reports into one table.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut sets = cli.global.sets.clone();
    if let Some(seed) = cli.global.seed {
        sets.push(format!("seed={seed}"));
    }
    if let Some(out) = &cli.global.out {
        let s = out
            .to_str()
            .ok_or_else(|| Error::Config("--out must be valid UTF-8".into()))?;
        sets.push(format!("output_dir={}", toml_string(s)));
    }
    let cfg = ExperimentConfig::load(cli.global.config.as_deref(), &sets)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::GenData => {
            let dir = cmd_gen_data(&cfg)?;
            writeln!(out, "wrote dataset to {}", dir.display())?;
        }
        Command::Train => {
            cmd_train(&cfg, &mut out)?;
        }
        Command::Eval { checkpoint } => {
            let cks = if checkpoint.is_empty() {
                vec![cfg.output_dir.join(CHECKPOINT_FILE)]
            } else {
                checkpoint
            };
            let rows = cmd_eval(&cfg, &cks)?;
            write!(out, "{}", format_table(&rows))?;
        }
        Command::Retrieve {
            checkpoint,
            strategy,
            k,
            json,
            caption,
        } => {
            let strategy: Strategy = strategy.parse()?;
            let ck = checkpoint.unwrap_or_else(|| cfg.output_dir.join(CHECKPOINT_FILE));
            let r = cmd_retrieve(&cfg, &ck, &caption, strategy, k)?;
            if json {
                let line = serde_json::to_string(&r).map_err(|e| Error::Invalid(e.to_string()))?;
                writeln!(out, "{line}")?;
            } else {
                write!(out, "{}", format_ranked(&r))?;
            }
        }
        Command::ShapeMetrics { gt, ret } => {
            let m = cmd_shape_metrics(&cfg, &gt, &ret)?;
            writeln!(out, "{}", format_shape_metrics(&m))?;
        }
        Command::Report { inputs } => {
            let rows = cmd_report(&cfg, &inputs)?;
            write!(out, "{}", format_table(&rows))?;
        }
    }
    Ok(())
}

/// Quotes `s` as a TOML basic string.
fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
