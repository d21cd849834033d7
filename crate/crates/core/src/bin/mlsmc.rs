//! Command-line front end for the MLSMC experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use mlsmc::harness::{self, BetaSource, ExperimentConfig, Mode, Scale};
use mlsmc::ProblemConfig;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    RateProbe,
    GroundTruth,
    MseVsCost,
    AcceptanceTrace,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BetaArg {
    Theory,
    Fitted,
}

/// Multilevel sequential Monte Carlo experiments for an elliptic inverse problem.
#[derive(Debug, Parser)]
#[command(name = "mlsmc", version)]
struct Cli {
    #[arg(value_enum)]
    mode: ModeArg,
    /// Problem definition (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Root seed; every random stream derives from it.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Repeats for the selected mode (defaults depend on the scale).
    #[arg(long)]
    repeats: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Use the published budgets instead of the desk-scale defaults.
    #[arg(long)]
    paper_scale: bool,
    /// Variance rate used for allocation.
    #[arg(long, value_enum, default_value = "theory")]
    beta_source: BetaArg,
    /// Accept a ground truth whose standard error fails the bias check.
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let problem = match ProblemConfig::from_path(&cli.config) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
    };
    let mode = match cli.mode {
        ModeArg::RateProbe => Mode::RateProbe,
        ModeArg::GroundTruth => Mode::GroundTruth,
        ModeArg::MseVsCost => Mode::MseVsCost,
        ModeArg::AcceptanceTrace => Mode::AcceptanceTrace,
    };
    let mut cfg = ExperimentConfig::new(problem, mode, cli.seed, cli.out);
    cfg.repeats = cli.repeats;
    cfg.force = cli.force;
    cfg.scale = if cli.paper_scale { Scale::published() } else { Scale::desk() };
    cfg.beta_source = match cli.beta_source {
        BetaArg::Theory => BetaSource::Theory,
        BetaArg::Fitted => BetaSource::Fitted,
    };
    match harness::run(&cfg) {
        Ok(summary) => {
            for line in summary.lines {
                println!("{line}");
            }
            for f in summary.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
