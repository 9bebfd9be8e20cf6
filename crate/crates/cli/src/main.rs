use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use opgp::config::{Experiment, ExperimentConfig};
use opgp::experiment::{self, Check};
use opgp::Error;

/// Gaussian process inference from point, integral, Fourier and derivative
/// observations.
#[derive(Debug, Parser)]
#[command(name = "opgp", version)]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Directory for CSV and JSON outputs.
    #[arg(long, global = true, env = "OPGP_OUT_DIR", default_value = "opgp-out")]
    out_dir: PathBuf,

    /// Gauss–Legendre order for integral and Fourier functionals.
    #[arg(long, global = true)]
    quad_order: Option<usize>,

    /// Grid size of the discretised oracle used by `verify`.
    #[arg(long, global = true)]
    oracle_n: Option<usize>,

    /// Tolerance for fiber and equivalence checks.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Assimilate the configured batches and write posterior checkpoints.
    Run { config: PathBuf },
    /// Cross-check the configured problem against the grid oracle and the
    /// alternative evaluation routes.
    Verify { config: PathBuf },
    /// Draw prior sample paths on the output grid.
    SamplePrior {
        config: PathBuf,
        #[arg(long, default_value_t = 5)]
        count: usize,
        /// Defaults to the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Mercer spectrum and power-RKHS summability diagnostic.
    Spectrum {
        config: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
    },
}

fn load(path: &Path, common: &Common) -> Result<Experiment, Error> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(q) = common.quad_order {
        cfg.quad_order = q;
    }
    if let Some(n) = common.oracle_n {
        cfg.oracle_n = n;
    }
    if let Some(t) = common.tolerance {
        cfg.tolerance = t;
    }
    cfg.build()
}

fn print_checks(checks: &[Check]) -> bool {
    for c in checks {
        println!("{c}");
    }
    checks.iter().all(|c| c.passed)
}

fn failure(checks: &[Check]) -> Error {
    let names: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    Error::ToleranceExceeded(names.join(", "))
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    let out = &cli.common.out_dir;
    match &cli.command {
        Command::Run { config } => {
            let exp = load(config, &cli.common)?;
            let output = experiment::run(&exp, out)?;
            for path in &output.csv_paths {
                println!("wrote {}", path.display());
            }
            println!("wrote {}", output.report_path.display());
            if !print_checks(&output.report.checks) {
                return Err(failure(&output.report.checks).into());
            }
        }
        Command::Verify { config } => {
            let exp = load(config, &cli.common)?;
            let report = experiment::verify(&exp)?;
            if !print_checks(&report.checks) {
                return Err(failure(&report.checks).into());
            }
        }
        Command::SamplePrior { config, count, seed } => {
            let exp = load(config, &cli.common)?;
            let path = experiment::sample_prior(&exp, *count, seed.unwrap_or(exp.seed), out)?;
            println!("wrote {}", path.display());
        }
        Command::Spectrum { config, theta } => {
            let exp = load(config, &cli.common)?;
            let report = experiment::spectrum(&exp, *theta, out)
                .with_context(|| format!("spectrum of {}", config.display()))?;
            println!(
                "{} eigenvalues ({} resolved), tail ratio {:.4}, verdict {}",
                report.grid_size, report.resolved, report.tail_ratio, report.verdict
            );
            println!("wrote {}", out.join("spectrum.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match e.downcast_ref::<Error>() {
                Some(inner) => eprintln!("error [{}]: {e:#}", inner.kind()),
                None => eprintln!("error: {e:#}"),
            }
            ExitCode::FAILURE
        }
    }
}
