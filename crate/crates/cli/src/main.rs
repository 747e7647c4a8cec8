//! Batch front end for the decq toolkit.
//!
//! Exit codes: 0 success, 1 unclassified failure (I/O and similar), 2
//! configuration error, 3 numeric failure, 4 enumeration cap exceeded.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Config, Overrides};
use decq::CoreError;

#[derive(Parser)]
#[command(
    name = "decq",
    version,
    about = "Decentralized quantized Q-learning on continuous-state games: simulation sweeps, policy-update chain analysis, and single-environment solves"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file (TOML); missing fields take documented defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the trial sweep over exploration-phase lengths on the team game.
    SimStudy {
        #[command(flatten)]
        common: CommonArgs,
        /// Trials per phase length.
        #[arg(long)]
        trials: Option<usize>,
        /// Phase lengths to sweep, comma separated (e.g. "100,1000").
        #[arg(long = "T", value_delimiter = ',')]
        phase_lengths: Option<Vec<usize>>,
        /// Number of tracked phases per trial.
        #[arg(long)]
        phases: Option<usize>,
    },
    /// Build the best-reply graph and analyze the policy-update chain.
    AnalyzeDynamics {
        #[command(flatten)]
        common: CommonArgs,
        /// Print the human-readable chain table to stdout.
        #[arg(long)]
        chain_report: bool,
    },
    /// Solve one agent's frozen environment to its limiting value table.
    SolveEnv {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn load_config(common: &CommonArgs, overrides: &Overrides) -> anyhow::Result<Config> {
    let mut config = match &common.config {
        Some(path) => Config::load(path)?,
        None => toml::from_str("").expect("empty config parses to defaults"),
    };
    config.apply(overrides);
    if config.threads > 0 {
        // Ignore the error if a global pool already exists (tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build_global();
    }
    Ok(config)
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    if let Some(core) = err.downcast_ref::<CoreError>() {
        return match core {
            CoreError::CapExceeded { .. } => 4,
            CoreError::NoConvergence { .. } | CoreError::Singular(_) | CoreError::NotAbsorbing { .. } => 3,
            CoreError::InvalidConfig(_)
            | CoreError::InvalidInput(_)
            | CoreError::EmptyBin { .. }
            | CoreError::HorizonTooSmall { .. } => 2,
            CoreError::Io { .. } | CoreError::Csv { .. } => 1,
        };
    }
    if err.downcast_ref::<toml::de::Error>().is_some() {
        return 2;
    }
    // bail!() messages in command setup are configuration problems.
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 1;
    }
    2
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::SimStudy {
            common,
            trials,
            phase_lengths,
            phases,
        } => {
            let overrides = Overrides {
                seed: common.seed,
                threads: common.threads,
                trials,
                phase_lengths,
                phases,
            };
            let config = load_config(&common, &overrides)?;
            commands::sim_study::run(&config, &common.out)
        }
        Command::AnalyzeDynamics {
            common,
            chain_report,
        } => {
            let overrides = Overrides {
                seed: common.seed,
                threads: common.threads,
                ..Overrides::default()
            };
            let config = load_config(&common, &overrides)?;
            commands::analyze::run(&config, &common.out, chain_report)
        }
        Command::SolveEnv { common } => {
            let overrides = Overrides {
                seed: common.seed,
                threads: common.threads,
                ..Overrides::default()
            };
            let config = load_config(&common, &overrides)?;
            commands::solve_env::run(&config, &common.out)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
