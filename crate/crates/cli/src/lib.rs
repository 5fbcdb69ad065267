//! Batch experiment runner: every study exposed as a subcommand with
//! reproducible configs and CSV/JSON outputs.
//!
//! Exit codes: 0 success, 2 usage error, 3 failed `--assert` check.

use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::path::PathBuf;

pub mod commands;
pub mod config;
pub mod output;

pub use config::{Law, OutputFormat, Settings};

/// Usage errors exit 2; a failed `--assert` check exits 3.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    AssertFailed(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

impl From<fvlab::Error> for CliError {
    fn from(err: fvlab::Error) -> Self {
        CliError::Usage(err.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Usage(format!("i/o error: {err}"))
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "fvlab",
    version,
    about = "Monte Carlo laboratory for Fleming-Viot particle systems driven by Bessel-type diffusions",
    after_help = "Exit codes: 0 success, 2 usage error, 3 failed --assert check."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compare the Monte Carlo mean of ln(jump factor^2) with its digamma
    /// expression; they must agree within 3 standard errors.
    SignTest(CommonArgs),
    /// Run the particle system (or the two-particle scaling construction)
    /// and report the extinction fraction, extinction times and, for the
    /// reflected law, the exponential tail fit.
    Extinct(ExtinctArgs),
    /// Couple the sum of squared positions against a squared Bessel
    /// process driven by the reconstructed Brownian motion and check
    /// domination on the shared grid.
    Coupling(CommonArgs),
    /// Measure the probability that a noisy path strays from the
    /// zero-noise collapse flow and compare it with the Gaussian-tail
    /// bound.
    FwCheck(FwArgs),
    /// Kolmogorov-Smirnov comparison of the exact jump-factor sampler
    /// against the two-path simulation of the same law.
    DensityCheck(CommonArgs),
    /// Evaluate the collapse constants and their smallness conditions.
    Constants(ConstantsArgs),
    /// Sample the exact hitting-time law start/(2G) and compare moments
    /// with theory; optionally cross-check against path simulation.
    HittingLaw(HittingArgs),
    /// Draw lifetime/jump-factor pairs from two-path simulation and run
    /// the series convergence verdict on them.
    Perpetuity(CommonArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// Bessel dimension (may be negative).
    #[arg(long, allow_negative_numbers = true)]
    pub nu: Option<f64>,
    /// Power-drift exponent (> 2).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Number of particles.
    #[arg(long = "n-particles")]
    pub n_particles: Option<usize>,
    /// Number of replicas (or samples, where a command draws one value per
    /// replica).
    #[arg(long)]
    pub replicas: Option<u64>,
    /// Time horizon.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Base time step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Absorption threshold.
    #[arg(long = "eps-abs")]
    pub eps_abs: Option<f64>,
    /// Base seed; replica k uses stream id k of this seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path ("-" for stdout, the default).
    #[arg(long)]
    pub out: Option<String>,
    /// Output format.
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Flat `key = value` config file; command-line flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Exit 3 if the command's acceptance check fails.
    #[arg(long)]
    pub assert: bool,
    /// Directory for per-replica path dumps (CSV columns time,value); only
    /// supported by commands that simulate paths.
    #[arg(long = "dump-paths")]
    pub dump_paths: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ExtinctArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Driving law.
    #[arg(long, value_enum)]
    pub law: Option<Law>,
    /// Use the two-particle scaling construction instead of direct
    /// simulation (Bessel law, N = 2 only).
    #[arg(long)]
    pub scaling: bool,
    /// Also export the event logs (CSV: replica_id,k,tau_k,dying,target).
    #[arg(long = "events-out")]
    pub events_out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct FwArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Start height of the flow.
    #[arg(long)]
    pub a: Option<f64>,
    /// Window fraction parameter in (0, 1).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Deviation threshold.
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct ConstantsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Start height.
    #[arg(long)]
    pub a: Option<f64>,
    /// Window fraction parameter in (0, 1).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Deviation fraction parameter in (0, 1).
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct HittingArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Squared-Bessel start point of the hitting-time law (a Bessel path
    /// from sqrt(start) has the same law).
    #[arg(long)]
    pub start: Option<f64>,
    /// Also simulate this many absorption paths and KS-compare them with
    /// the exact sampler.
    #[arg(long = "paths")]
    pub path_replicas: Option<u64>,
}

/// Parses the arguments, runs the selected command, and returns the process
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            // clap prints help/version on stdout with success; everything
            // else is a usage error.
            let code = if err.use_stderr() { 2 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    let started = std::time::Instant::now();
    let outcome = dispatch(cli.command);
    let code = match outcome {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::AssertFailed(msg)) => {
            eprintln!("assert failed: {msg}");
            3
        }
    };
    eprintln!("# wall_time_s = {:.3}", started.elapsed().as_secs_f64());
    code
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::SignTest(args) => commands::sign_test(Settings::resolve("sign-test", &args)?),
        Command::Extinct(args) => {
            let mut settings = Settings::resolve("extinct", &args.common)?;
            settings.apply_extinct(&args)?;
            commands::extinct(settings, args.events_out)
        }
        Command::Coupling(args) => commands::coupling(Settings::resolve("coupling", &args)?),
        Command::FwCheck(args) => {
            let mut settings = Settings::resolve("fw-check", &args.common)?;
            settings.apply_fw(&args)?;
            commands::fw_check(settings)
        }
        Command::DensityCheck(args) => {
            commands::density_check(Settings::resolve("density-check", &args)?)
        }
        Command::Constants(args) => {
            let mut settings = Settings::resolve("constants", &args.common)?;
            settings.apply_constants(&args)?;
            commands::constants(settings)
        }
        Command::HittingLaw(args) => {
            let mut settings = Settings::resolve("hitting-law", &args.common)?;
            settings.apply_hitting(&args)?;
            commands::hitting_law(settings)
        }
        Command::Perpetuity(args) => {
            commands::perpetuity(Settings::resolve("perpetuity", &args)?)
        }
    }
}
