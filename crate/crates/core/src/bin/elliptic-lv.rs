use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use elliptic_lv::harness::{self, ConfigFile, Experiment, ExperimentConfig, Overrides};
use elliptic_lv::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "elliptic-lv",
    version,
    about = "Random elliptic Lotka-Volterra experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML experiment configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output CSV path (stdout when absent)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Worker threads (results do not depend on this)
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Eigenvalues of one sampled interaction matrix
    Spectrum,
    /// Feasibility fraction against kappa
    Transition,
    /// Largest admissible mu on a (rho, alpha) grid
    Admissible,
    /// Trajectories of a small system
    Dynamics,
    /// Cavity fixed points on a parameter grid
    Cavity,
    /// Cavity predictions against Monte-Carlo equilibria
    CavityVsMc,
    /// Surviving fraction across correlations
    CorrelationImpact,
    /// Positive-definiteness verdicts
    Stability,
    /// Saturated equilibria of sampled systems
    Equilibrium,
    /// Extremes of normalized row sums
    Evt,
}

impl From<Command> for Experiment {
    fn from(c: Command) -> Self {
        match c {
            Command::Spectrum => Experiment::Spectrum,
            Command::Transition => Experiment::Transition,
            Command::Admissible => Experiment::AdmissibleMap,
            Command::Dynamics => Experiment::DynamicsDemo,
            Command::Cavity => Experiment::Cavity,
            Command::CavityVsMc => Experiment::CavityVsMc,
            Command::CorrelationImpact => Experiment::CorrelationImpact,
            Command::Stability => Experiment::Stability,
            Command::Equilibrium => Experiment::Equilibrium,
            Command::Evt => Experiment::Evt,
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let file = match &cli.common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            toml::from_str::<ConfigFile>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => ConfigFile::default(),
    };
    let overrides = Overrides {
        base_seed: cli.common.seed,
        trials: cli.common.trials,
        workers: cli.common.workers,
        output_path: cli.common.out.clone(),
    };
    let cfg = ExperimentConfig::resolve(Some(cli.command.into()), &file, &overrides)?;
    let out = harness::run(&cfg)?;
    for note in &out.notes {
        eprintln!("{note}");
    }
    match &cfg.output_path {
        Some(path) => out.table.write_to(path)?,
        None => print!("{}", out.table.render()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
