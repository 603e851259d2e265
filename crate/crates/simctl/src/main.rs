use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use parkchain_simctl::{load, validate_scenario, LoadError, Runner};

#[derive(Parser)]
#[command(name = "parksim", version, about = "Run parking marketplace scenarios on a simulated ledger")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario and write its artifacts.
    Run {
        scenario: PathBuf,
        /// Ledger event log (JSONL).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Off-chain voucher trace (JSONL).
        #[arg(long)]
        offchain: Option<PathBuf>,
        /// Funds-flow report (JSON).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Check a scenario without running it.
    Validate { scenario: PathBuf },
}

const VALIDATION_FAILURE: u8 = 1;
const EXECUTION_FAILURE: u8 = 2;

fn write(path: &Path, f: impl FnOnce(BufWriter<File>) -> std::io::Result<()>) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f(BufWriter::new(file)).with_context(|| format!("writing {}", path.display()))
}

fn run(scenario: &Path, out: Option<PathBuf>, offchain: Option<PathBuf>, report: Option<PathBuf>) -> ExitCode {
    let scenario = match load(scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("invalid scenario: {e}");
            return ExitCode::from(VALIDATION_FAILURE);
        }
    };
    let runner = match Runner::run(&scenario) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("execution failed at {e}");
            return ExitCode::from(EXECUTION_FAILURE);
        }
    };
    let rep = runner.report();
    let written = (|| -> anyhow::Result<()> {
        if let Some(p) = &out {
            write(p, |w| runner.write_events(w))?;
        }
        if let Some(p) = &offchain {
            write(p, |w| runner.write_trace(w))?;
        }
        if let Some(p) = &report {
            std::fs::write(p, rep.to_json()).with_context(|| format!("writing {}", p.display()))?;
        }
        Ok(())
    })();
    if let Err(e) = written {
        eprintln!("{e:#}");
        return ExitCode::from(EXECUTION_FAILURE);
    }
    println!(
        "{} steps, {} events ({} transactions), {} vouchers off-chain, {} channels, conserved: {}",
        scenario.steps.len(),
        rep.events,
        rep.transactions,
        runner.trace().len(),
        rep.channels.len(),
        rep.conserved,
    );
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { scenario, out, offchain, report } => run(&scenario, out, offchain, report),
        Command::Validate { scenario } => match validate_scenario(&scenario) {
            Ok(d) if d.is_empty() => {
                println!("ok");
                ExitCode::SUCCESS
            }
            Ok(d) => {
                for x in d {
                    eprintln!("{x}");
                }
                ExitCode::from(VALIDATION_FAILURE)
            }
            Err(e @ LoadError::Io { .. }) | Err(e @ LoadError::Invalid(_)) => {
                eprintln!("{e}");
                ExitCode::from(VALIDATION_FAILURE)
            }
        },
    }
}
