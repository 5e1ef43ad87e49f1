mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use resetcert::frf::{AsymptoteSpec, FrfFormat};

use crate::config::{Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "resetcert", version, about = "Stability certificates for reset control systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Measured plant response (CSV, frequencies in Hz).
    #[arg(long, global = true)]
    frf: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Complex)]
    frf_format: FormatArg,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    grid_points: Option<usize>,

    /// Plant slopes outside the measured band, as `low,high`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    asymptote: Option<AsymptoteSpec>,

    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// CSV of NSV angle (degrees) against frequency.
    #[arg(long, global = true)]
    nsv_out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// First-order verdict from the Nyquist stability vector.
    Classify,
    /// Second-order (GSORE) certificate search.
    GsoreCheck,
    /// Check a given H-beta candidate, or search for one (first order).
    Hbeta,
    /// Hybrid time-domain simulation.
    Simulate,
    /// Rewrite a frequency response in the complex CSV format.
    FrfConvert,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum FormatArg {
    Complex,
    Magphase,
}

impl From<FormatArg> for FrfFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Complex => FrfFormat::Complex,
            FormatArg::Magphase => FrfFormat::Magphase,
        }
    }
}

/// Outcome of a command that ran to completion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Certified,
    NotCertified,
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let overrides = Overrides {
        frf: cli.frf,
        frf_format: cli.frf_format.into(),
        seed: cli.seed,
        grid_points: cli.grid_points,
        asymptote: cli.asymptote,
    };
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&overrides);
    let out = cli.out.as_deref();
    match cli.command {
        Command::Classify => commands::classify(&cfg, &overrides, out),
        Command::GsoreCheck => commands::gsore_check(&cfg, &overrides, out),
        Command::Hbeta => commands::hbeta(&cfg, &overrides, out),
        Command::Simulate => commands::simulate(&cfg, &overrides, out, cli.nsv_out.as_deref()),
        Command::FrfConvert => commands::frf_convert(&cfg, &overrides, out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Outcome::Certified) => ExitCode::SUCCESS,
        Ok(Outcome::NotCertified) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
