//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numeric error.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{
    baseline_reports, cmd_backtest, cmd_baseline, cmd_compare, cmd_synth, cmd_train, load_series, load_split,
    train_agent, Comparison, TrainOutput, CHECKPOINT_FILE, COMPARISON_JSON, COMPARISON_TXT, TRAINING_LOG_FILE,
    VALIDATION_REPORT_FILE,
};
pub use config::{RunConfig, ValidationMode};

use crate::error::{Error, ErrorClass, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "stocktrader", version, about = "DDPG stock trading with min-variance and index baselines")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Price table (long or wide CSV); overrides `data`.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Output directory; overrides `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long, global = true)]
    dump_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the configured synthetic market as a wide CSV.
    Synth {
        /// Destination file (default `<out>/prices.csv`).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train an agent and write its checkpoint and training log.
    Train {
        /// Independent runs, one output subdirectory per seed, trained in parallel.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Evaluate a checkpoint on the trade period.
    Backtest {
        /// Checkpoint (default `<out>/agent.json`).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run the min-variance and index baselines on the trade period.
    Baseline,
    /// Compare DDPG with both baselines; trains first unless a checkpoint is given.
    Compare {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &cli.data {
        cfg.data = Some(d.clone());
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    Ok(cfg)
}

fn train_many(cfg: &RunConfig, seeds: &[u64]) -> Result<()> {
    cfg.validate()?;
    let results: Vec<Result<()>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let mut run = cfg.clone();
                run.seed = Some(seed);
                run.out = cfg.out.join(format!("seed_{seed}"));
                scope.spawn(move || cmd_train(&run).map(|_| ()))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
    });
    results.into_iter().collect()
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli)?;
    if cli.dump_config {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    match cli.command {
        Command::Synth { output } => {
            let output = output.unwrap_or_else(|| cfg.out.join("prices.csv"));
            cmd_synth(&cfg, &output)?;
            println!("wrote {}", output.display());
        }
        Command::Train { seeds } if !seeds.is_empty() => {
            train_many(&cfg, &seeds)?;
            println!("trained {} agents under {}", seeds.len(), cfg.out.display());
        }
        Command::Train { .. } => {
            let out = cmd_train(&cfg)?;
            if let Some(last) = out.log.episodes.last() {
                println!("episode {}: final value {:.2}", last.episode, last.final_value);
            }
            println!("wrote {}", out.checkpoint.display());
        }
        Command::Backtest { checkpoint } => {
            let checkpoint = checkpoint.unwrap_or_else(|| cfg.out.join(CHECKPOINT_FILE));
            println!("{}", cmd_backtest(&cfg, &checkpoint)?.to_json());
        }
        Command::Baseline => {
            let (min_var, index) = cmd_baseline(&cfg)?;
            println!("{}\n{}", min_var.to_json(), index.to_json());
        }
        Command::Compare { checkpoint } => {
            print!("{}", cmd_compare(&cfg, checkpoint.as_deref())?.to_table());
        }
    }
    Ok(())
}

pub fn exit_code(err: &Error) -> i32 {
    match err.class() {
        ErrorClass::Config => EXIT_CONFIG,
        ErrorClass::Io => EXIT_IO,
        ErrorClass::Numeric => EXIT_NUMERIC,
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
