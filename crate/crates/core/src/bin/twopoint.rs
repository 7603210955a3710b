use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use twopoint::config::{parse_config, BarrierSource, ExperimentConfig};
use twopoint::report::fmt;
use twopoint::runner::{self, RunOutcome};
use twopoint::Error;

#[derive(Parser)]
#[command(name = "twopoint", about = "Two-point gradient estimate experiments")]
struct Cli {
    /// Worker threads for the pair search (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every check listed in the experiment file.
    Run { config: PathBuf },
    /// Barrier operations.
    Barrier {
        #[command(subcommand)]
        action: BarrierAction,
    },
    /// Print the version.
    Version,
}

#[derive(Subcommand)]
enum BarrierAction {
    /// Verify the configured barrier condition.
    Check { config: PathBuf },
    /// Construct the barrier numerically and write barrier.csv.
    Solve { config: PathBuf },
}

fn load(path: &Path) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut cfg = parse_config(&text)?;
    // Barrier tables are looked up next to the experiment file.
    if cfg.barrier.mode == BarrierSource::Csv && Path::new(&cfg.barrier.path).is_relative() {
        if let Some(dir) = path.parent() {
            cfg.barrier.path = dir.join(&cfg.barrier.path).to_string_lossy().into_owned();
        }
    }
    Ok(cfg)
}

fn print(outcome: &RunOutcome) {
    for r in &outcome.summary {
        let verdict = if r.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {} worst={} tol={}", r.check, fmt(r.worst), fmt(r.tol));
    }
    if let Some(e) = &outcome.error {
        eprintln!("error: {e}");
    }
    println!("output: {}", outcome.out_dir.display());
}

fn execute(config: &Path, f: fn(&ExperimentConfig, &Path) -> RunOutcome) -> u8 {
    match load(config) {
        Ok(cfg) => {
            let outcome = f(&cfg, &runner::output_dir(&cfg));
            print(&outcome);
            outcome.exit_code() as u8
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code() as u8
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let code = match cli.command {
        Command::Version => {
            println!("twopoint {}", env!("CARGO_PKG_VERSION"));
            0
        }
        Command::Run { config } => execute(&config, runner::run_experiment),
        Command::Barrier { action: BarrierAction::Check { config } } => execute(&config, runner::barrier_check),
        Command::Barrier { action: BarrierAction::Solve { config } } => execute(&config, runner::barrier_solve),
    };
    ExitCode::from(code)
}
