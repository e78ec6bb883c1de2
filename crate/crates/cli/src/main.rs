//! `bslab`: spectra, simulations and verification runs for branching
//! diffusions, driven by a TOML config or a bundled scenario.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 numerical failure,
//! 3 verification inconclusive, 4 verification failed.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use branching_spectra::config::RunConfig;
use branching_spectra::Error;

#[derive(Parser, Debug)]
#[command(
    name = "bslab",
    version,
    about = "Branching-diffusion spectral laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Low spectrum, eigenvector store and ground-state profile.
    Spectrum(Common),
    /// Replicas of the particle system; total mass at the sample times.
    Simulate(Common),
    /// Weighted single-path estimates of the semigroup.
    Fk(Common),
    /// Weighted particles approximating the conditioned law.
    Qsd(Common),
    /// Run the checks selected in the [verify] section.
    Verify(Common),
    /// Sweep of the envelope integral over (c, c0).
    Bounds(Common),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML run configuration.
    #[arg(
        long,
        conflicts_with = "scenario",
        required_unless_present = "scenario"
    )]
    config: Option<PathBuf>,
    /// Bundled scenario: harmonic, ou-kappa, yule, critical.
    #[arg(long)]
    scenario: Option<String>,
    /// Output directory (overrides [output] dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (overrides [sim] seed).
    #[arg(long)]
    seed: Option<u64>,
}

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_NUMERIC: u8 = 2;
pub const EXIT_INCONCLUSIVE: u8 = 3;
pub const EXIT_FAILED: u8 = 4;

pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub header: String,
}

fn context(args: &Common) -> branching_spectra::Result<Context> {
    let mut config = match (&args.config, &args.scenario) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(name)) => RunConfig::scenario(name)?,
        (None, None) => return Err(Error::Config("pass --config or --scenario".into())),
    };
    if let Some(seed) = args.seed {
        config.override_seed(seed);
    }
    let out = args
        .out
        .clone()
        .or_else(|| config.output.as_ref().map(|o| PathBuf::from(&o.dir)))
        .unwrap_or_else(|| PathBuf::from("bslab-out"));
    std::fs::create_dir_all(&out)?;
    let header = config.header();
    Ok(Context {
        config,
        out,
        header,
    })
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidInput(_) => EXIT_USAGE,
        _ => EXIT_NUMERIC,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (args, run): (&Common, fn(&Context) -> branching_spectra::Result<u8>) = match &cli.command {
        Command::Spectrum(a) => (a, commands::spectrum),
        Command::Simulate(a) => (a, commands::simulate),
        Command::Fk(a) => (a, commands::fk),
        Command::Qsd(a) => (a, commands::qsd),
        Command::Verify(a) => (a, commands::verify),
        Command::Bounds(a) => (a, commands::bounds),
    };
    let result = context(args).and_then(|ctx| run(&ctx));
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("bslab: {e}");
            if let Error::NotConfining { .. } = e {
                eprintln!("bslab: the spectrum is not discrete on this box (no confinement)");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
