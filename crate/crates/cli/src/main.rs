//! `rydchip`: runs the chip-experiment models from a TOML config and writes
//! CSV/JSON data, gnuplot stubs and a checksummed manifest.
//!
//! Exit codes: 0 success, 1 numerical non-convergence, 2 configuration or I/O error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Outcome;
use config::ExperimentConfig;
use output::Outputs;

#[derive(Debug)]
pub struct CliError {
    pub stage: String,
    pub message: String,
    pub code: u8,
}

impl CliError {
    pub fn config(stage: &str, message: impl Into<String>) -> Self {
        CliError { stage: stage.to_string(), message: message.into(), code: 2 }
    }

    pub fn numerical(stage: &str, message: impl Into<String>) -> Self {
        CliError { stage: stage.to_string(), message: message.into(), code: 1 }
    }

    pub fn from_core(stage: &str, e: rydchip::Error) -> Self {
        use rydchip::Error::*;
        match e {
            Eigen(_) | NonFiniteModel { .. } | UndefinedEstimate(_) => Self::numerical(stage, e.to_string()),
            _ => Self::config(stage, e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "rydchip", version, about = "Rydberg atoms above a superconducting chip: Stark maps, excitation scans, cavity spectra, Rabi traces and SFI histograms")]
struct Cli {
    /// TOML config with sections atomic, surface, cavity, sfi, run
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// override a config value, e.g. --set cavity.kappa_mhz=9 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// output directory (default: $RYDCHIP_OUT, then run.output_dir)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// cap on worker threads for the dense linear algebra
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stark map over an electric-field grid (V/cm)
    StarkMap {
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        emin: f64,
        #[arg(long, default_value_t = 8.0, allow_negative_numbers = true)]
        emax: f64,
        /// number of field points
        #[arg(long, default_value_t = 400)]
        steps: usize,
    },
    /// Predicted excitation counts versus compensation field E_h (V/cm)
    ExcitationScan {
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        ehmin: f64,
        #[arg(long, default_value_t = 12.0, allow_negative_numbers = true)]
        ehmax: f64,
        #[arg(long, default_value_t = 241)]
        steps: usize,
        /// CSV of E_h_Vcm,counts (summed over run.pulses) to fit
        #[arg(long, value_name = "DATA.csv")]
        fit: Option<PathBuf>,
    },
    /// Microwave spectra at several relative pump powers, with Poisson counts
    Spectrum {
        #[arg(long, value_delimiter = ',', default_value = "1,4,16")]
        powers: Vec<f64>,
        /// start:stop:count in GHz
        #[arg(long, default_value = "20.540:20.562:45")]
        fgrid: String,
        /// joint fit of all powers
        #[arg(long)]
        fit: bool,
    },
    /// Ensemble-averaged Rabi oscillations at several relative pump powers
    Rabi {
        #[arg(long, value_delimiter = ',', default_value = "1,4,16")]
        powers: Vec<f64>,
        /// longest pulse, μs (a trailing "us" is accepted)
        #[arg(long, default_value = "1.5")]
        tmax: String,
        #[arg(long, default_value_t = 76)]
        tsteps: usize,
        #[arg(long)]
        fit: bool,
    },
    /// SFI arrival histogram and inferred r2 population
    Sfi {
        #[arg(long, default_value = "r1=0.1,r2=0.9")]
        populations: String,
        /// t_us,field_Vcm rows; overrides sfi.ramp_file
        #[arg(long, value_name = "RAMP.csv")]
        ramp: Option<PathBuf>,
    },
    /// Invariant checks at desk scale
    Selftest,
    /// Print the resolved configuration as TOML
    ShowConfig,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::StarkMap { .. } => "stark-map",
            Command::ExcitationScan { .. } => "excitation-scan",
            Command::Spectrum { .. } => "spectrum",
            Command::Rabi { .. } => "rabi",
            Command::Sfi { .. } => "sfi",
            Command::Selftest => "selftest",
            Command::ShowConfig => "show-config",
        }
    }
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("arguments", "--threads must be at least 1"));
        }
        rydchip::linalg::set_threads(n);
    }
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Command::ShowConfig = cli.command {
        print!("{}", toml::to_string(&cfg).map_err(|e| CliError::config("config", e.to_string()))?);
        return Ok(Outcome::Done);
    }
    let name = cli.command.name();
    let mut out = Outputs::create(cli.out.as_deref(), &cfg, name)?;
    let outcome = match &cli.command {
        Command::StarkMap { emin, emax, steps } => commands::stark_map(&cfg, *emin, *emax, *steps, &mut out)?,
        Command::ExcitationScan { ehmin, ehmax, steps, fit } => {
            commands::excitation_scan(&cfg, *ehmin, *ehmax, *steps, fit.as_ref(), &mut out)?
        }
        Command::Spectrum { powers, fgrid, fit } => {
            let grid = commands::parse_fgrid(fgrid)?;
            commands::spectrum(&cfg, powers, &grid, *fit, &mut out)?
        }
        Command::Rabi { powers, tmax, tsteps, fit } => {
            let t = commands::parse_time_us(tmax)?;
            commands::rabi(&cfg, powers, t, *tsteps, *fit, &mut out)?
        }
        Command::Sfi { populations, ramp } => {
            let pops = commands::parse_populations(populations)?;
            commands::sfi(&cfg, pops, ramp.as_ref(), &mut out)?
        }
        Command::Selftest => commands::selftest(&mut out)?,
        Command::ShowConfig => unreachable!(),
    };
    let manifest = out.finish(&cfg, std::env::args().skip(1).collect())?;
    eprintln!("wrote {}", manifest.display());
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged(stage)) => {
            eprintln!("error: stage {stage}: did not converge (outputs written)");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: stage {}: {}", e.stage, e.message);
            ExitCode::from(e.code)
        }
    }
}
