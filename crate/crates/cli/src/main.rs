//! `cylwave`: configuration-driven front end of the cylwave workbench.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cylwave", version, about = "Line-source scattering by dielectric cylinders: NFM-SEP and MAS solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Restrict to these methods, `nfm` and/or `mas` (repeatable or
    /// comma-separated).
    #[arg(long, value_delimiter = ',')]
    only: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the discrete currents; writes currents.csv and summary.json.
    Solve(RunArgs),
    /// Evaluate E_z on observation rings; writes fields.csv and summary.json.
    Fields(RunArgs),
    /// Oscillation, convergence or concordance sweep over N.
    Sweep(RunArgs),
    /// Run the invariant suite; exits 0 iff every check passes.
    Validate {
        /// Accepted for interface symmetry; the suite is self-contained.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the report to <out>/validation.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Restrict to these groups (repeatable or comma-separated).
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
    },
}

/// Exit code of configuration and usage errors.
const EXIT_CONFIG: u8 = 2;
/// Exit code of solver and I/O errors.
const EXIT_RUNTIME: u8 = 3;
/// Exit code of a validation run with failing checks.
const EXIT_CHECKS: u8 = 1;

fn fail(kind: &str, path: Option<&str>, message: String, code: u8) -> ExitCode {
    let body = json!({"error": {"kind": kind, "path": path, "message": message}});
    eprintln!("{body}");
    ExitCode::from(code)
}

fn report(e: anyhow::Error) -> ExitCode {
    if let Some(c) = e.downcast_ref::<config::ConfigError>() {
        return fail("config", Some(&c.path), c.message.clone(), EXIT_CONFIG);
    }
    if let Some(c) = e.downcast_ref::<cylwave_core::Error>() {
        return fail("solver", None, c.to_string(), EXIT_RUNTIME);
    }
    fail("runtime", None, format!("{e:#}"), EXIT_RUNTIME)
}

fn init_threads() -> Result<(), config::ConfigError> {
    let Ok(raw) = std::env::var("CYLWAVE_THREADS") else { return Ok(()) };
    let bad = || config::ConfigError {
        path: "env.CYLWAVE_THREADS".into(),
        message: format!("expected a positive integer, got '{raw}'"),
    };
    let n: usize = raw.trim().parse().map_err(|_| bad())?;
    if n == 0 {
        return Err(bad());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| config::ConfigError {
        path: "env.CYLWAVE_THREADS".into(),
        message: e.to_string(),
    })
}

fn load(path: &PathBuf) -> anyhow::Result<config::LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| config::ConfigError {
        path: "$".into(),
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    Ok(config::parse(&text)?)
}

/// Loads the configuration of a run command and applies `--only`.
fn load_run(a: &RunArgs) -> anyhow::Result<config::LoadedConfig> {
    let mut c = load(&a.config)?;
    c.restrict_methods(&a.only)?;
    Ok(c)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        return report(e.into());
    }
    let result = match cli.command {
        Command::Solve(a) => load_run(&a).and_then(|c| commands::solve(&c, &a.out)),
        Command::Fields(a) => load_run(&a).and_then(|c| commands::fields(&c, &a.out)),
        Command::Sweep(a) => load_run(&a).and_then(|c| commands::sweep(&c, &a.out)),
        Command::Validate { config, out, only } => {
            let run = || -> anyhow::Result<(bool, serde_json::Value)> {
                if let Some(p) = &config {
                    load(p)?;
                }
                let (passed, report) = commands::validate(&only)?;
                if let Some(dir) = &out {
                    output::write_json(&dir.join("validation.json"), &report)?;
                }
                Ok((passed, report))
            };
            return match run() {
                Ok((passed, report)) => {
                    println!("{}", serde_json::to_string_pretty(&report).unwrap_or_default());
                    if passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_CHECKS)
                    }
                }
                Err(e) => report(e),
            };
        }
    };
    match result {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => report(e),
    }
}
