//! `nilspec`: length spectra and marked length spectra of the catalog
//! nilmanifolds, or of nilmanifolds read from JSON.
//!
//! Exit status: 0 when every result matches its expectation, 1 on a mismatch,
//! 2 on a usage or input error.

mod commands;
mod output;
mod subject;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use nilspec::spectra::SpectraError;

use commands::{GeodesicArgs, Outcome, Settings};
use output::Format;
use subject::Subject;

#[derive(Parser)]
#[command(name = "nilspec", version, about = "Length spectra of compact nilmanifolds")]
struct Cli {
    /// Largest absolute word exponent enumerated (default depends on command and example).
    #[arg(long, global = true)]
    window: Option<i64>,
    /// Largest length reported.
    #[arg(long = "lambda-max", global = true, default_value_t = 4.0)]
    lambda_max: f64,
    /// Numerical tolerance for lengths, shooting and integration.
    #[arg(long, global = true, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Pretty)]
    format: Format,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Length,
    Marked,
}

#[derive(Subcommand)]
enum Command {
    /// Structural checks: jacobi, step, nonsingular, automorphism, almost-inner,
    /// isometry, factorization. Append `=fail` to a check expected to fail.
    Verify {
        /// Example id (I..V) or JSON file.
        target: String,
        checks: Vec<String>,
    },
    /// Length spectrum of one lattice.
    Lengths {
        target: String,
        /// Lattice index, starting at 1.
        #[arg(default_value_t = 1)]
        lattice: usize,
    },
    /// Compare the two lattices' length or marked length spectra.
    Compare {
        target: String,
        #[arg(long, value_enum, default_value_t = Mode::Length)]
        mode: Mode,
        /// Catalog automorphism to mark with.
        #[arg(long)]
        automorphism: Option<String>,
        /// JSON automorphism to mark with.
        #[arg(long = "automorphism-file")]
        automorphism_file: Option<String>,
    },
    /// Integrate a geodesic from the identity, or shoot for translated geodesics.
    Geodesic {
        target: String,
        /// Initial velocity in frame coordinates, comma separated; normalized.
        #[arg(long, allow_hyphen_values = true)]
        velocity: Option<String>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long = "s-max", default_value_t = 10.0)]
        s_max: f64,
        /// Work on the quotient by the last derived term.
        #[arg(long)]
        quotient: bool,
        /// Work on the Heisenberg factor of the quotient.
        #[arg(long = "heisenberg-factor")]
        heisenberg_factor: bool,
        /// log γ in structural coordinates, comma separated rationals.
        #[arg(long, allow_hyphen_values = true)]
        gamma: Option<String>,
        /// Period for the translation defect (default: s-max).
        #[arg(long)]
        period: Option<f64>,
        /// Search for translated geodesics of γ.
        #[arg(long)]
        shoot: bool,
        /// Period search interval lo,hi (default: closed-form bracket).
        #[arg(long)]
        bracket: Option<String>,
        #[arg(long, default_value_t = 64)]
        starts: usize,
    },
    /// Catalog records as JSON, or the table of expected properties.
    Catalog { target: Option<String> },
}

fn run(cli: &Cli) -> Result<Outcome> {
    if cli.window.is_some_and(|w| w < 1) {
        anyhow::bail!("--window must be at least 1");
    }
    if cli.tol <= 0.0 || cli.tol.is_nan() {
        anyhow::bail!("--tol must be positive");
    }
    let cfg = Settings {
        window: cli.window,
        lambda_max: cli.lambda_max,
        tol: cli.tol,
    };
    match &cli.command {
        Command::Verify { target, checks } => commands::verify(&Subject::load(target)?, checks, &cfg),
        Command::Lengths { target, lattice } => commands::lengths(&Subject::load(target)?, *lattice, &cfg),
        Command::Compare {
            target,
            mode,
            automorphism,
            automorphism_file,
        } => {
            let s = Subject::load(target)?;
            match mode {
                Mode::Length => commands::compare_length(&s, &cfg),
                Mode::Marked => {
                    let phi = match (automorphism, automorphism_file) {
                        (_, Some(f)) => Some(commands::load_automorphism(f, s.algebra.dim)?),
                        (Some(n), None) => Some(
                            s.automorphisms
                                .iter()
                                .find(|a| &a.name == n)
                                .cloned()
                                .ok_or_else(|| anyhow::anyhow!("MissingAutomorphism: no automorphism {n:?}"))?,
                        ),
                        (None, None) => None,
                    };
                    commands::compare_marked(&s, phi, &cfg)
                }
            }
        }
        Command::Geodesic {
            target,
            velocity,
            seed,
            s_max,
            quotient,
            heisenberg_factor,
            gamma,
            period,
            shoot,
            bracket,
            starts,
        } => {
            let g = GeodesicArgs {
                velocity: velocity.clone(),
                seed: *seed,
                s_max: *s_max,
                quotient: *quotient,
                heisenberg_factor: *heisenberg_factor,
                gamma: gamma.clone(),
                period: *period,
                shoot: *shoot,
                bracket: bracket.clone(),
                starts: *starts,
            };
            commands::geodesic(&Subject::load(target)?, &g, &cfg)
        }
        Command::Catalog { target } => commands::catalog(target.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            if let Err(e) = output::emit(&outcome.report, cli.format, cli.out.as_ref()) {
                eprintln!("error: {e:#}");
                return ExitCode::from(2);
            }
            if outcome.matches {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            // A failed numerical search is a result, not a usage error.
            match e.downcast_ref::<SpectraError>() {
                Some(SpectraError::NoConvergence { .. }) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
