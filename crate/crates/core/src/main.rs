use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use lqrlab::bench::config::Task;
use lqrlab::bench::{load_config, run, BenchError};

/// Continuous-time LQR optimization experiments.
///
/// Exit codes: 0 success, 1 i/o failure, 2 bad config, 3 numerical failure,
/// 4 a requested check did not hold.
#[derive(Parser, Debug)]
#[command(name = "lqrlab", version)]
struct Cli {
    /// Task to run; overrides `task` in the config.
    task: Task,
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output.dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lqrlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: &Cli) -> Result<(), BenchError> {
    let (mut cfg, base) = load_config(&cli.config)?;
    cfg.task = Some(cli.task);
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    let outcome = run(&cfg, &base)?;
    let text = serde_json::to_string_pretty(&outcome).map_err(|e| BenchError::Io(e.to_string()))?;
    // A closed pipe on stdout is not a failure of the run.
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    Ok(())
}
