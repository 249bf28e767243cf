#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use commands::{Context, Outcome};
use config::ConfigError;

/// GBDT transforms of canonical systems: identity checks, transformed
/// Hamiltonians, jump verification and inverse recovery.
#[derive(Debug, Parser)]
#[command(name = "gbdt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON scenario file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory for reports and tables.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Multiplies every tolerance.
    #[arg(long, global = true, value_name = "FLOAT", default_value_t = 1.0)]
    tolerance_scale: f64,
    /// Overrides the position grid size (or the sample count for jump and inversion runs).
    #[arg(long, global = true, value_name = "INT")]
    grid_points: Option<usize>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Evolve a triple and check the material identity along the interval.
    VerifyIdentity,
    /// Sample the transformed Hamiltonian.
    Transform,
    /// Check the boundary jump relation.
    Jump,
    /// Recover Hamiltonian and jump from a scalar inner function.
    Invert,
    /// Inversion followed by the jump check on the recovered system.
    Roundtrip,
}

fn run(cli: &Cli) -> Result<Outcome, ConfigError> {
    if !(cli.tolerance_scale > 0.0 && cli.tolerance_scale.is_finite()) {
        return Err(ConfigError::Invalid(format!("--tolerance-scale must be positive, got {}", cli.tolerance_scale)));
    }
    let path = cli.config.as_deref().ok_or_else(|| ConfigError::Invalid("--config is required".into()))?;
    let ctx = Context { tolerance_scale: cli.tolerance_scale, grid_points: cli.grid_points };
    info!("{:?} with {}", cli.command, path.display());
    match cli.command {
        Command::VerifyIdentity => commands::verify_identity(&config::load(path)?, ctx),
        Command::Transform => commands::transform(&config::load(path)?, ctx),
        Command::Jump => commands::jump(&config::load(path)?, ctx),
        Command::Invert => commands::invert(&config::load(path)?, ctx, false),
        Command::Roundtrip => commands::invert(&config::load(path)?, ctx, true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GBDT_LOG", "error")).init();
    let mut outcome = match run(&cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let path = match output::write_all(&cli.out, &mut outcome.report, &outcome.artifacts) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot write to {}: {e}", cli.out.display());
            return ExitCode::from(2);
        }
    };
    let report = &outcome.report;
    if let Some(err) = &report.error {
        eprintln!("error: {} ({})", err.message, err.kind);
    }
    if !cli.quiet {
        for c in &report.checks {
            let verdict = if c.pass { "pass" } else { "FAIL" };
            println!("{verdict:4}  {:<28} max {:.3e}  tol {:.1e}", c.name, c.max, c.tolerance);
        }
        let verdict = if report.pass { "PASS" } else { "FAIL" };
        println!("{} {verdict}  report: {}", report.command, path.display());
    }
    ExitCode::from(outcome.exit_code)
}
