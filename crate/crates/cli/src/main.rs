//! `conjflow`: runs scenario files and writes JSON reports.

mod catalog;
mod output;
mod run;
mod scenario;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use scenario::{Plan, Scenario, SchemaError};

#[derive(Parser)]
#[command(
    name = "conjflow",
    version,
    about = "Conjugate instants along geodesics, from scenario files"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its report
    Run {
        scenario: PathBuf,
        /// Directory for the report and CSV files
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Also write eigenvalue branches, instants and index profiles as CSV
        #[arg(long)]
        csv: bool,
        /// Override the scenario seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override `grid.step`
        #[arg(long, allow_hyphen_values = true)]
        step: Option<f64>,
    },
    /// List scenario kinds, system families and component kinds
    Catalog,
    /// Check a scenario file without running it
    Validate { scenario: PathBuf },
}

enum Failure {
    Schema(SchemaError),
    Quality(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Schema(_) => 2,
            Failure::Quality(_) => 3,
            Failure::Internal(_) => 4,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Schema(e) => format!("invalid scenario: {e}"),
            Failure::Quality(m) => format!("quality check failed: {m}"),
            Failure::Internal(m) => format!("internal error: {m}"),
        }
    }
}

impl From<SchemaError> for Failure {
    fn from(e: SchemaError) -> Self {
        Failure::Schema(e)
    }
}

impl From<conjflow::Error> for Failure {
    fn from(e: conjflow::Error) -> Self {
        if e.is_quality() {
            Failure::Quality(e.to_string())
        } else {
            Failure::Internal(e.to_string())
        }
    }
}

fn load(path: &Path, seed: Option<u64>, step: Option<f64>) -> Result<(Scenario, Plan), Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| SchemaError::new("scenario", format!("cannot read {}: {e}", path.display())))?;
    let mut s = scenario::parse(&text)?;
    s.override_with(seed, step);
    let plan = s.validate()?;
    Ok((s, plan))
}

fn run(path: &Path, out: &Path, csv: bool, seed: Option<u64>, step: Option<f64>) -> Result<(), Failure> {
    let (scenario, plan) = load(path, seed, step)?;
    let clock = Instant::now();
    let outcome = run::execute(&plan, &scenario)?;
    let wall = clock.elapsed().as_secs_f64();
    let report = output::Report::new(&scenario, &outcome, wall);
    let stem = scenario.stem();
    let io = |e: std::io::Error| Failure::Internal(format!("writing output: {e}"));
    let written = output::write_report(out, &stem, &report).map_err(io)?;
    for line in &outcome.summary {
        println!("{line}");
    }
    println!("report: {}", written.display());
    if csv {
        for p in output::write_tables(out, &stem, &outcome.tables).map_err(io)? {
            println!("csv: {}", p.display());
        }
    }
    let failed: Vec<String> = outcome
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.describe())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Quality(failed.join("; ")))
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            csv,
            seed,
            step,
        } => run(&scenario, &out, csv, seed, step),
        Command::Catalog => {
            print!("{}", catalog::render());
            Ok(())
        }
        Command::Validate { scenario } => {
            let (s, _) = load(&scenario, None, None)?;
            println!("ok: {} scenario {}", s.kind.id(), s.stem());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = panic::catch_unwind(AssertUnwindSafe(|| dispatch(cli)));
    let failure = match outcome {
        Ok(Ok(())) => return ExitCode::SUCCESS,
        Ok(Err(f)) => f,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            Failure::Internal(msg)
        }
    };
    eprintln!("error: {}", failure.message());
    ExitCode::from(failure.code())
}
