//! Experiment harness: synthetic recoveries, phase-transition sweeps, the
//! noise λ-continuation, clustering with missing entries and rank sweeps,
//! written out as JSON and CSV.

pub mod check;
pub mod config;
pub mod error;
pub mod experiment;
pub mod output;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

pub use config::ExperimentConfig;
pub use error::CliError;
pub use experiment::{Report, Runner};

#[derive(Debug, Parser)]
#[command(name = "liftrec", version, about = "Nonlinear matrix recovery experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Worker threads; 1 gives bit-exact reproducible output.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub solver: Option<SolverChoice>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Independent recoveries of one data family.
    Recover,
    /// Success fractions over sampling ratio × structure parameter.
    Phase,
    /// Penalised recovery along an increasing λ ladder with warm starts.
    Noise,
    /// Completion followed by k-means, scored by the Rand index.
    Cluster,
    /// Recovery with the target rank swept around the true lifted rank.
    RankSweep,
    /// Finite-difference and manifold property checks.
    Check,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverChoice {
    Rtr2,
    Altmin1,
    Altmin2,
    Simple,
}

impl SolverChoice {
    pub fn name(&self) -> &'static str {
        match self {
            SolverChoice::Rtr2 => "rtr2",
            SolverChoice::Altmin1 => "altmin1",
            SolverChoice::Altmin2 => "altmin2",
            SolverChoice::Simple => "simple",
        }
    }
}

const DEFAULT_OUT: &str = "liftrec-out";
const DEFAULT_CHECK_INSTANCES: usize = 20;

/// Runs a command and writes its outputs. Numerical failures inside trials
/// are reported after the outputs are on disk.
pub fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    if cli.command == Command::Check {
        let instances = cli.trials.unwrap_or(DEFAULT_CHECK_INSTANCES);
        let seed = cli.seed.unwrap_or(0);
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        let report = check::run_check(instances, seed)?;
        report.write(&out, false)?;
        return finish(report.numerical_failures, out, "derivative or manifold checks failed");
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <json> is required for this command".into()))?;
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.trials = trials;
    }
    if let Some(solver) = cli.solver {
        cfg.solver = solver.name().into();
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = Some(jobs);
    }
    cfg.validate()?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let report = run_command(cli.command, &cfg, path.parent())?;
    report.write(&out, cfg.write_traces)?;
    finish(report.numerical_failures, out, "trials ended in numerical failure")
}

/// Runs one experiment command on a validated config.
pub fn run_command(command: Command, cfg: &ExperimentConfig, base: Option<&Path>) -> Result<Report, CliError> {
    let runner = Runner::new(cfg, base, cfg.jobs.unwrap_or(1))?;
    match command {
        Command::Recover => runner.recover(),
        Command::Phase => runner.phase(),
        Command::Noise => runner.noise(),
        Command::Cluster => runner.cluster(),
        Command::RankSweep => runner.rank_sweep(),
        Command::Check => check::run_check(cfg.trials, cfg.seed),
    }
}

fn finish(failures: usize, out: PathBuf, what: &str) -> Result<PathBuf, CliError> {
    if failures > 0 {
        return Err(CliError::Numerical(format!(
            "{failures} {what}; outputs written to {}",
            out.display()
        )));
    }
    Ok(out)
}
