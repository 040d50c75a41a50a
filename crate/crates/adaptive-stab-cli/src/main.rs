//! `adaptive-stab`: simulate, certify, bound and sweep the adaptive-control examples.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use adaptive_stab::certify::CertifyWhat;
use adaptive_stab::Error;

#[derive(Parser, Debug)]
#[command(name = "adaptive-stab", version = manifest::VERSION, about = "Certainty-equivalence adaptive control: simulation and certified bounds")]
pub struct Cli {
    /// Output directory; every written path is relative to it.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Monte-Carlo ensemble: quantile series, coverage, CSV/JSON/SVG.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        /// Base seed; overrides the config and ADAPTIVE_STAB_SEED.
        #[arg(long)]
        seed: Option<u64>,
        /// Skip the SVG chart.
        #[arg(long)]
        no_svg: bool,
    },
    /// Check excitation, invariance and Lyapunov certificates by sampling.
    Certify {
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = What::All)]
        what: What,
        /// Monte-Carlo samples per scan cell and invariance samples.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Bound schedule, characteristic times, condition verdicts and stability envelope.
    Bounds {
        config: PathBuf,
        /// Confidence level; repeatable. Defaults to the config's `deltas`.
        #[arg(long = "delta")]
        deltas: Vec<f64>,
        /// Search cap for the characteristic times.
        #[arg(long)]
        cap: Option<u64>,
        /// Rows written to the schedule CSV.
        #[arg(long)]
        rows: Option<u64>,
    },
    /// Condition verdicts and times across values of one parameter.
    Sweep {
        config: PathBuf,
        /// Example parameter to vary, or `delta`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        /// Confidence level; defaults to the first of the config's `deltas`.
        #[arg(long)]
        delta: Option<f64>,
        /// Search cap for the characteristic times.
        #[arg(long)]
        cap: Option<u64>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum What {
    Excitation,
    Rpi,
    Lyapunov,
    All,
}

impl From<What> for CertifyWhat {
    fn from(w: What) -> Self {
        match w {
            What::Excitation => Self::Excitation,
            What::Rpi => Self::Rpi,
            What::Lyapunov => Self::Lyapunov,
            What::All => Self::All,
        }
    }
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;
pub const EXIT_NOT_CERTIFIED: u8 = 4;
pub const EXIT_MISSING: u8 = 5;

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Contract(_) | Error::Numeric(_) => EXIT_RUNTIME,
        Error::NotCertified(_) => EXIT_NOT_CERTIFIED,
        Error::Missing(_) => EXIT_MISSING,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size the thread pool: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
