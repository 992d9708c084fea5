//! `ergodic`: command-line front end.
//!
//! Exit codes: 0 when every check and bound holds, 2 when the analysis ran
//! but a hypothesis or bound failed, 1 on any error.

// `!(x > 0.0)` style checks are deliberate: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ergodic::config::KeyValueFile;

use settings::{keys_help, Command, RunConfig};

#[derive(Parser)]
#[command(name = "ergodic", version, about = "Ergodicity diagnostics for scalar diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Check boundary, normalization and curvature hypotheses.
    Check(Common),
    /// Write the Gibbs stationary density on the solver grid.
    Stationary(Common),
    /// Evolve the Fokker-Planck equation and test the entropy decay envelope.
    Evolve(Common),
    /// Compare the closed-form and finite-difference Γ₂ and test the curvature-dimension slack.
    Gamma2(Common),
    /// Audit the Lamperti transform and the dissipativity of its drift.
    Lamperti(Common),
    /// Simulate an ensemble and compare its histogram with the stationary law.
    Simulate(Common),
    /// Measure pullback diameters under shared noise.
    Pullback(Common),
    /// Run the command named by the config's `command` key.
    Run(Common),
}

#[derive(Args)]
#[command(after_help = keys_help())]
struct Common {
    /// Key-value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Solver cells.
    #[arg(long)]
    grid: Option<usize>,
    /// Time step.
    #[arg(long)]
    dt: Option<f64>,
    /// Final time.
    #[arg(long)]
    horizon: Option<f64>,
    /// Override any config key, e.g. `--set param.k=2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

fn effective_config(c: &Common) -> Result<KeyValueFile, Box<dyn std::error::Error>> {
    let mut file = match &c.config {
        Some(p) => KeyValueFile::read(p)?,
        None => KeyValueFile::parse("")?,
    };
    for s in &c.sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| format!("--set expects KEY=VALUE, got `{s}`"))?;
        file.set(k.trim(), v.trim());
    }
    let flags = [
        ("seed", c.seed.map(|v| v.to_string())),
        ("out", c.out.clone()),
        ("grid", c.grid.map(|v| v.to_string())),
        ("dt", c.dt.map(|v| v.to_string())),
        ("horizon", c.horizon.map(|v| v.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            file.set(k, &v);
        }
    }
    Ok(file)
}

fn run(cli: Cli) -> Result<bool, Box<dyn std::error::Error>> {
    let (requested, common) = match &cli.command {
        Sub::Check(c) => (Some(Command::Check), c),
        Sub::Stationary(c) => (Some(Command::Stationary), c),
        Sub::Evolve(c) => (Some(Command::Evolve), c),
        Sub::Gamma2(c) => (Some(Command::Gamma2), c),
        Sub::Lamperti(c) => (Some(Command::Lamperti), c),
        Sub::Simulate(c) => (Some(Command::Simulate), c),
        Sub::Pullback(c) => (Some(Command::Pullback), c),
        Sub::Run(c) => (None, c),
    };
    let file = effective_config(common)?;
    let cfg = RunConfig::from_file(&file)?;
    let command = match (requested, cfg.command) {
        (Some(r), Some(c)) if r != c => {
            return Err(format!("config names command `{}` but `{}` was invoked", c.name(), r.name()).into())
        }
        (Some(r), _) => r,
        (None, Some(c)) => c,
        (None, None) => return Err("`run` needs a `command` key in the config".into()),
    };
    commands::dispatch(&cfg, command)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("ergodic: analysis completed; a hypothesis or bound failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("ergodic: error: {e}");
            ExitCode::from(1)
        }
    }
}
