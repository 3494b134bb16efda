//! `oampdc`: Schmidt decompositions, fringe scans, gain calibration and
//! phase-sensitivity curves written as CSV files.
//!
//! Set `OAMPDC_CACHE_DIR` to keep Fourier blocks between runs.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use commands::*;
use config::SetupArgs;
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "oampdc", version, about = "OAM-resolved PDC and SU(1,1) interferometer numerics")]
struct Cli {
    /// Output directory.
    #[arg(long, short, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Schmidt eigenvalues λ, Λ, Λ′ of one setup.
    Decompose(DecomposeArgs),
    /// Integral intensity against the gap between the crystals.
    Fringe(FringeArgs),
    /// Phase sensitivity against the Dove prism angle.
    Sensitivity(SensitivityArgs),
    /// Gain calibration constants at a low and a high gain.
    Calibrate(CalibrateArgs),
    /// Closed-form orbital eigenvalues against the numerical decomposition.
    Analytic(AnalyticArgs),
    /// Radial profiles of selected Schmidt modes.
    Modes(ModesArgs),
    /// Radial intensity spectrum.
    Intensity(IntensityArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Decompose(_) => "decompose",
            Command::Fringe(_) => "fringe",
            Command::Sensitivity(_) => "sensitivity",
            Command::Calibrate(_) => "calibrate",
            Command::Analytic(_) => "analytic",
            Command::Modes(_) => "modes",
            Command::Intensity(_) => "intensity",
        }
    }

    fn setup(&self) -> &SetupArgs {
        match self {
            Command::Decompose(a) => &a.setup,
            Command::Fringe(a) => &a.setup,
            Command::Sensitivity(a) => &a.setup,
            Command::Calibrate(a) => &a.setup,
            Command::Analytic(a) => &a.setup,
            Command::Modes(a) => &a.setup,
            Command::Intensity(a) => &a.setup,
        }
    }
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let start = Instant::now();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let resolved = cli.command.setup().resolve()?;
    let mut r = Run::new(cli.command.name(), cli.out, &resolved)?;
    match &cli.command {
        Command::Decompose(a) => decompose_cmd(&mut r, a, &resolved)?,
        Command::Fringe(a) => fringe_cmd(&mut r, a, &resolved)?,
        Command::Sensitivity(a) => sensitivity_cmd(&mut r, a, &resolved)?,
        Command::Calibrate(a) => calibrate_cmd(&mut r, a, &resolved)?,
        Command::Analytic(a) => analytic_cmd(&mut r, a, &resolved)?,
        Command::Modes(a) => modes_cmd(&mut r, a, &resolved)?,
        Command::Intensity(a) => intensity_cmd(&mut r, a, &resolved)?,
    }
    r.finish(start.elapsed().as_secs_f64())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
