mod commands;
mod manifest;
mod records;
mod summary;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use manifest::Manifest;
use summary::Filter;

/// Monte Carlo simulation and tomography of heralded scattering-error reversal.
#[derive(Debug, Parser)]
#[command(name = "scatrev", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run manifest (TOML).
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `[experiment] seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `[experiment] shots` (per tomography setting).
    #[arg(long)]
    shots: Option<u64>,
    /// Records entering tomography: V, H, unconditioned or corrected.
    #[arg(long, default_value = "unconditioned")]
    filter: Filter,
}

impl Common {
    fn manifest(&self) -> Result<Manifest> {
        let mut m = Manifest::load(&self.manifest)?;
        m.apply_overrides(self.seed, self.shots, self.out.as_deref());
        m.config().validate()?;
        Ok(m)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the manifest and write records.csv and summary.json.
    Simulate(Common),
    /// Process tomography from a records file or a fresh run.
    Tomo {
        #[command(flatten)]
        common: Common,
        /// Analyse this records file instead of simulating.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Ramsey fringes per branch against the recorded TAC phase.
    Ramsey(Common),
    /// Repeat the run over a grid of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Parameter name, e.g. p_multi or ellipticity.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        grid: Vec<f64>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(c) => commands::simulate(&c.manifest()?, c.filter).map(drop),
        Command::Tomo { common, records } => {
            commands::tomo(&common.manifest()?, records.as_deref(), common.filter).map(drop)
        }
        Command::Ramsey(c) => commands::ramsey(&c.manifest()?).map(drop),
        Command::Sweep { common, param, grid } => {
            commands::sweep(&common.manifest()?, &param, &grid, common.filter).map(drop)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
