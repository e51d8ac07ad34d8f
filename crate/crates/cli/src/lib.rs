//! Command-line front end for `phasegi`: TOML experiment configs, the
//! `phantom`, `simulate`, `reconstruct`, `psf`, `compare` and `profile`
//! commands, and their file outputs.
//!
//! Exit codes: 0 on success, 1 on I/O failure, 2 on invalid input,
//! 3 when `--strict` turns a numerical guard into an error.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::commands::CompareArgs;
use crate::config::ExperimentConfig;
use crate::pipeline::Experiment;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(#[from] clap::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("format: {0}")]
    Format(String),
    #[error(transparent)]
    Core(phasegi::Error),
    #[error("guard: {0}")]
    Guard(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl From<phasegi::Error> for CliError {
    fn from(e: phasegi::Error) -> Self {
        match e {
            phasegi::Error::Io(io) => CliError::Io(io),
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(e) => e.exit_code(),
            CliError::Io(_) => 1,
            CliError::Guard(_) => 3,
            CliError::Config(_) | CliError::Format(_) | CliError::Core(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "phasegi", version, about = "Phase-sensitive x-ray ghost imaging simulator")]
pub struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, or output file for `profile`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Treat near-field and sampling warnings as errors.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Override the seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AxisArg {
    Horizontal,
    Vertical,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the thickness map.
    Phantom,
    /// Simulate references, bucket series and the direct image.
    Simulate,
    /// Build ghosts from a simulation directory. Uses the config.toml
    /// saved there unless --config is given.
    Reconstruct,
    /// Point-spread function of the mask set.
    Psf,
    /// Compare a ghost raster with a direct raster.
    Compare {
        #[arg(long)]
        direct: PathBuf,
        #[arg(long)]
        ghost: PathBuf,
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        factor: usize,
        #[arg(long)]
        row: Option<usize>,
    },
    /// Extract one line of a raster as CSV.
    Profile {
        #[arg(long)]
        raster: PathBuf,
        #[arg(long, value_enum, default_value = "horizontal")]
        axis: AxisArg,
        #[arg(long)]
        index: usize,
    },
}

impl Cli {
    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    fn experiment(&self, fallback: Option<PathBuf>) -> Result<Experiment, CliError> {
        let path = self
            .config
            .clone()
            .or(fallback)
            .ok_or_else(|| CliError::Config("--config is required".into()))?;
        let mut config = ExperimentConfig::load(&path)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        Experiment::new(config)
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// report text printed on success.
pub fn run<I, T>(args: I) -> Result<String, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    let out = cli.out_dir();
    let report = match &cli.command {
        Command::Phantom => commands::phantom(&cli.experiment(None)?, &out)?,
        Command::Simulate => commands::simulate(&cli.experiment(None)?, &out, cli.strict)?,
        Command::Reconstruct => {
            let exp = cli.experiment(Some(out.join("config.toml")))?;
            commands::reconstruct(&exp, &out)?
        }
        Command::Psf => commands::psf_command(&cli.experiment(None)?, &out)?,
        Command::Compare { direct, ghost, valid, factor, row } => {
            let args = CompareArgs {
                direct: direct.clone(),
                ghost: ghost.clone(),
                valid: valid.clone(),
                factor: *factor,
                row: *row,
            };
            commands::compare(&args, &out)?
        }
        Command::Profile { raster, axis, index } => {
            let axis = match axis {
                AxisArg::Horizontal => phasegi::fields::Axis::Horizontal,
                AxisArg::Vertical => phasegi::fields::Axis::Vertical,
            };
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("profile.csv"));
            let n = commands::profile(raster, axis, *index, &out)?;
            return Ok(format!("samples={n}\n"));
        }
    };
    Ok(report.render())
}
