use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use anchor_fim::harness::{
    appendix_check, build_table, info, sweep_csv, sweep_nu, verify_derivatives, RunConfig,
};
use anchor_fim::Error;

#[derive(Parser)]
#[command(
    name = "anchor-fim",
    version,
    about = "Fisher information bounds for a single MIMO link"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Identifiability table for all seven unknown-parameter rows, both regimes.
    /// Without --out the CSV goes to stdout; with it, a JSON file is written
    /// next to the CSV.
    Table {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// PEB and OEB for each destination array size in nu_sweep.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic and finite-difference Jacobians.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check that source orientation carries no information once the path
    /// gain is unknown.
    Appendix {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fraunhofer distance, link distance and regime classification.
    Info {
        /// Defaults to the built-in scenario.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

enum Failure {
    Lib(Error),
    Io(String),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Table { config, out } => {
            let report = build_table(&RunConfig::load(&config)?)?;
            match out {
                Some(path) => {
                    write(&path, &report.to_csv())?;
                    write(&path.with_extension("json"), &report.to_json())?;
                }
                None => print!("{}", report.to_csv()),
            }
        }
        Command::Sweep { config, out } => {
            let records = sweep_nu(&RunConfig::load(&config)?)?;
            write(&out, &sweep_csv(&records))?;
        }
        Command::Verify { config } => {
            let report = verify_derivatives(&RunConfig::load(&config)?)?;
            print!("{}", json(&report));
            if !report.passed {
                return Err(Failure::Check(format!(
                    "worst relative error {:e} exceeds {:e}",
                    report.worst, report.tolerance
                )));
            }
        }
        Command::Appendix { config } => {
            let report = appendix_check(&RunConfig::load(&config)?)?;
            print!("{}", json(&report));
            if report.applicable && !report.passed {
                return Err(Failure::Check(format!(
                    "orientation EFIM norm {:e} is not negligible against {:e}",
                    report.efim_frobenius, report.block_frobenius
                )));
            }
        }
        Command::Info { config } => {
            let cfg = match config {
                Some(path) => RunConfig::load(&path)?,
                None => RunConfig::default(),
            };
            print!("{}", json(&info(&cfg)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::DegenerateGeometry(_) => ExitCode::from(3),
                Error::Config { .. } | Error::InvalidArgument(_) => ExitCode::from(2),
            }
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(4)
        }
    }
}
