//! Command-line front end: `train`, `eval`, `diagnose`, `dynamics` and
//! `ablate`, each driven by an [`ExperimentConfig`] JSON document.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration or input error,
//! 3 numerical failure, 4 version mismatch.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use commands::*;
pub use config::*;

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_VERSION: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "rairl", version, about = "Adversarial inverse RL for sequence generation on grammar worlds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Experiment config (JSON); defaults apply when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides training.seed; for eval and diagnose, the evaluation seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides output.dir.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dotted-path override, e.g. training.iterations=500. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train and write run.csv, final.ckpt and config-echo.json.
    Train(CommonArgs),
    /// Write evaluation reports for a checkpoint.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Reports to produce; evaluation.reports when absent. Repeatable.
        #[arg(long, value_enum)]
        which: Vec<EvalKind>,
    },
    /// Locate and rewrite bad tokens in a file of sequences.
    Diagnose {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Lines of `context<TAB>tokens[<TAB>corrupted position]`.
        #[arg(long)]
        input: PathBuf,
    },
    /// Run the one-step game for both generator variants.
    Dynamics(CommonArgs),
    /// Train and evaluate every row of the ablation matrix.
    Ablate(CommonArgs),
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidInput(_) => EXIT_CONFIG,
        Error::Numerical(_) => EXIT_NUMERIC,
        Error::Version { .. } => EXIT_VERSION,
        _ => EXIT_FAILURE,
    }
}

/// Initializes logging from `RAIRL_LOG` (default `info`).
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("RAIRL_LOG", "info");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn resolve(common: &CommonArgs) -> crate::Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(common.config.as_deref(), &common.set)?;
    if let Some(seed) = common.seed {
        cfg.training.seed = seed;
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    Ok((cfg, out))
}

fn kinds(cfg: &ExperimentConfig, which: &[EvalKind]) -> Vec<EvalKind> {
    let list = if which.is_empty() { &cfg.evaluation.reports } else { which };
    let mut out = Vec::new();
    for &k in list {
        if !out.contains(&k) {
            out.push(k);
        }
    }
    out
}

/// Seed of an evaluation: `--seed` when given, else the checkpoint's.
fn eval_seed(common: &CommonArgs, checkpoint: &Path) -> crate::Result<u64> {
    match common.seed {
        Some(s) => Ok(s),
        None => Ok(crate::training::load_checkpoint(checkpoint)?.config.seed),
    }
}

pub fn execute(cli: &Cli) -> crate::Result<()> {
    match &cli.command {
        Command::Train(common) => {
            let (cfg, out) = resolve(common)?;
            let t = cmd_train(&cfg, &out)?;
            if let Some(p) = t.record.last() {
                log::info!("final KL {:.4}, mean |D-0.5| {:.4}", p.kl_mean, p.mean_abs_dev);
            }
            log::info!("wrote {}", out.display());
        }
        Command::Eval { common, checkpoint, which } => {
            let (cfg, out) = resolve(common)?;
            let seed = eval_seed(common, checkpoint)?;
            cmd_eval(&cfg, checkpoint, &kinds(&cfg, which), seed, &out)?;
            log::info!("wrote {}", out.display());
        }
        Command::Diagnose { common, checkpoint, input } => {
            let (cfg, out) = resolve(common)?;
            let seed = eval_seed(common, checkpoint)?;
            let s = cmd_diagnose(&cfg, checkpoint, input, seed, &out)?;
            log::info!("{} sequences, {} flagged", s.sequences, s.flagged);
        }
        Command::Dynamics(common) => {
            let (cfg, out) = resolve(common)?;
            for s in cmd_dynamics(&cfg, cfg.training.seed, &out)? {
                log::info!("{:?}: final-window std of D {:.3e}", s.variant, s.window_std_d);
            }
        }
        Command::Ablate(common) => {
            let (cfg, out) = resolve(common)?;
            let table = cmd_ablate(&cfg, &out)?;
            let failed = table.iter().filter(|r| r.status != "ok").count();
            if failed > 0 {
                log::warn!("{failed} ablation row(s) failed");
            }
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command, and returns the
/// process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
