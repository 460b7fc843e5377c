//! `refimg`: reference-normalized near-field microwave imaging pipeline.

mod compare;
mod config;
mod error;
mod manifest;
mod stages;

use clap::{Parser, Subcommand};
use compare::CompareMetric;
use config::PipelineConfig;
use error::{CliError, Result};
use manifest::Manifest;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "refimg",
    about = "Near-field microwave imaging from modulated-signal observations",
    long_about = "Config-driven pipeline: synthetic measurement generation (em-forward or \
OFDM chain), reference normalization with background subtraction, per-frequency inverse \
source solves, image generation, multi-frequency fusion, and MIP export.\n\n\
Every artifact is recorded in <out>/manifest.json with its SHA-256 digest. \
Within-stage parallelism is controlled by the RAYON_NUM_THREADS environment variable.\n\n\
Exit codes: 0 success, 2 configuration error, 3 numerical-stage error."
)]
struct Cli {
    /// Pipeline configuration file (TOML)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory for artifacts and the manifest
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Override the config's random seed
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize scene and background datasets with the em-forward model
    Simulate,
    /// Synthesize the datasets through the OFDM transmit/receive chain
    SimulateOfdm,
    /// Normalize, background-subtract, and solve per-frequency inverse problems
    Invert,
    /// Generate one image volume per exported spectrum
    Image,
    /// Combine per-frequency volumes with phase/magnitude corrections
    Fuse {
        /// Fusion mode (default: both)
        #[arg(long, value_name = "coherent|incoherent")]
        mode: Option<String>,
    },
    /// Export maximum-intensity projections of a fused volume
    Mip {
        /// Volume to project (default: <out>/fused_coherent.img)
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
    },
    /// Compare two image volumes under a metric; prints a JSON report
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// peak-to-artifact-db | peak-location | phase-flatness
        #[arg(long, default_value = "peak-to-artifact-db")]
        metric: String,
    },
    /// Run the whole pipeline: simulate, invert, image, fuse, mip
    Full,
    /// Re-hash every artifact listed in the manifest and report mismatches
    Verify,
}

fn run(cli: &Cli) -> Result<()> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let (cfg, text) = PipelineConfig::load(config_path)?;
    let out = cli.out.as_path();
    let seed = cli.seed.unwrap_or(cfg.scenario.seed);
    let mut manifest = Manifest::load_or_new(out, seed, &text);

    match &cli.command {
        Command::Simulate => stages::simulate(&cfg, &mut manifest, out, cli.seed)?,
        Command::SimulateOfdm => stages::simulate_ofdm(&cfg, &mut manifest, out, cli.seed)?,
        Command::Invert => stages::invert(&cfg, &mut manifest, out)?,
        Command::Image => stages::image(&cfg, &mut manifest, out)?,
        Command::Fuse { mode } => stages::fuse(&cfg, &mut manifest, out, mode.as_deref())?,
        Command::Mip { input } => stages::mip(&cfg, &mut manifest, out, input.as_deref())?,
        Command::Compare { a, b, metric } => {
            let metric: CompareMetric = metric.parse()?;
            return compare::compare(&cfg, out, a, b, metric);
        }
        Command::Full => stages::full(&cfg, &mut manifest, out, cli.seed)?,
        Command::Verify => {
            let bad = manifest.verify(out)?;
            if !bad.is_empty() {
                return Err(CliError::Stage {
                    stage: "verify",
                    message: format!("hash mismatch for: {}", bad.join(", ")),
                });
            }
            println!("verify: {} artifacts match the manifest", manifest.files.len());
            return Ok(());
        }
    }
    manifest.save(out)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("refimg: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
