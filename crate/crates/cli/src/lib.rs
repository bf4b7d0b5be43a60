//! Command-line driver: configuration, orchestration and CSV/text output.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] warpflow::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// The computation ran but its outcome is a failure.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    /// 1 for numerical or experiment failures, 2 for usage and configuration errors.
    pub fn exit_code(&self) -> i32 {
        use warpflow::Error as E;
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Core(E::Domain { .. } | E::Contract(_) | E::Hypothesis(_)) => 2,
            CliError::Core(_) | CliError::Io(_) | CliError::Csv(_) | CliError::Failed(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "warpflow", version, about = "Curvature flow experiments on warped products")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory; overrides `output` in the configuration.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads for concurrent runs.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Seed for randomized initial profiles; overrides `seed` in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the structure condition and build the γ-transform.
    CheckWarp,
    /// Evolve a profile and record diagnostics.
    Run,
    /// Modulus of continuity of a sampled profile.
    Modulus {
        /// Two-column CSV `theta,value`.
        #[arg(long)]
        input: PathBuf,
    },
    /// Parameter search, subsolution check and blow-up runs.
    Blowup,
    /// Tabulate Γ, ψ and ψ′.
    Transform,
}

/// Runs the parsed command and returns the process exit status.
pub fn execute(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let path = cli
        .config
        .ok_or_else(|| CliError::Usage("--config <path> is required".into()))?;
    let mut cfg = config::RunConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli
        .out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out)?;
    let ctx = commands::Context { cfg, out };
    let outcome = match cli.command {
        Command::CheckWarp => commands::cmd_check_warp(&ctx),
        Command::Run => commands::cmd_run(&ctx),
        Command::Modulus { input } => commands::cmd_modulus(&ctx, &input),
        Command::Blowup => commands::cmd_blowup(&ctx),
        Command::Transform => commands::cmd_transform(&ctx),
    }?;
    print!("{}", outcome.report);
    Ok(outcome.status)
}
