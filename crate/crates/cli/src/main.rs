//! `fastlimit`: run epsilon sweeps, print convergence tables and inspect
//! nonlinearities.
//!
//! Exit status is 0 on success, 1 when the input is invalid and 2 when a
//! solver failed (including a sweep in which some epsilon failed).

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fastlimit_core::experiment::{convergence_table, run_sweep};
use fastlimit_core::{Branch, Error, Nonlinearity, RunConfig, SweepReport, System};

#[derive(Parser)]
#[command(name = "fastlimit", version, about = "Fast-reaction limit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the epsilon sweep described by a config file.
    Run {
        config: PathBuf,
        /// Overrides `output.dir` from the config.
        #[arg(long, env = "FASTLIMIT_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
        /// Overrides `workers` from the config.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Print the convergence table of a report.json.
    Table { report: PathBuf },
    /// Print thresholds and structural condition verdicts of a config's nonlinearity.
    CheckNonlinearity { config: PathBuf },
}

enum Failure {
    Validation(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() || matches!(e, Error::Io(_) | Error::Json(_) | Error::TooFewEntries { .. }) {
            Failure::Validation(e.to_string())
        } else {
            Failure::Solver(e.to_string())
        }
    }
}

fn read(path: &PathBuf) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Validation(format!("cannot read {}: {e}", path.display())))
}

fn run(config: PathBuf, output_dir: Option<PathBuf>, workers: Option<usize>) -> Result<(), Failure> {
    let mut cfg = RunConfig::parse(&read(&config)?)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    if let Some(w) = workers {
        cfg.workers = w;
    }
    let outcome = run_sweep(&cfg)?;
    let report = &outcome.report;
    if report.entries.len() >= 2 {
        print!("{}", convergence_table(report)?);
    }
    println!("wrote {}", cfg.output_dir.join("report.json").display());
    let failed: Vec<String> = report
        .failures()
        .map(|e| format!("eps = {:e}: {}", e.eps, e.error.as_deref().unwrap_or_default()))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Solver(failed.join("\n")))
    }
}

fn table(path: PathBuf) -> Result<(), Failure> {
    let report = SweepReport::from_json(&read(&path)?)?;
    print!("{}", convergence_table(&report)?);
    Ok(())
}

fn check_nonlinearity(config: PathBuf) -> Result<(), Failure> {
    let cfg = RunConfig::parse(&read(&config)?)?;
    let nl = Nonlinearity::new(cfg.nonlinearity)?;
    let th = nl.thresholds();
    println!("alpha_minus = {}", th.alpha_minus);
    println!("alpha_plus  = {}", th.alpha_plus);
    println!("beta_minus  = {}", th.beta_minus);
    println!("beta_plus   = {}", th.beta_plus);
    println!("f_minus     = {}", th.f_minus);
    println!("f_plus      = {}", th.f_plus);
    let mid = 0.5 * (th.f_minus + th.f_plus);
    println!(
        "inverse slopes at {mid}: {} {} {}",
        nl.inverse_slope(Branch::Lower, mid),
        nl.inverse_slope(Branch::Middle, mid),
        nl.inverse_slope(Branch::Upper, mid)
    );
    let d = nl.check_theorem_d();
    println!("unstable_slope_condition = {}", d.unstable_slope_condition);
    match d.witness_tau0 {
        Some(t) => println!("distinct_outer_slopes_at = {t}"),
        None => println!("distinct_outer_slopes_at = none"),
    }
    println!("theorem_d = {}", d.holds);
    for system in [System::FastReaction, System::ForwardBackward] {
        println!("nondegenerate[{}] = {}", system.name(), nl.check_nondegeneracy(system));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, output_dir, workers } => run(config, output_dir, workers),
        Command::Table { report } => table(report),
        Command::CheckNonlinearity { config } => check_nonlinearity(config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver error: {msg}");
            ExitCode::from(2)
        }
    }
}
