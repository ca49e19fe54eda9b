//! `erasot`: runs experiment configs and the bundled acceptance suite.

use clap::{Parser, Subcommand};
use erasot_core::acceptance;
use erasot_core::exec::configure_threads;
use erasot_core::experiment::{run_experiment, write_atomic, ExperimentConfig, ExperimentError};
use erasot_core::hexseed::parse_seed;
use erasot_core::Execution;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "erasot", version, about = "Oblivious transfer over a wiretapped erasure channel")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config and write report.json and report.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config's `output`, default `.`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for the parallel backend.
        #[arg(long)]
        threads: Option<usize>,
        /// Master seed override, hex.
        #[arg(long, value_parser = parse_seed)]
        seed: Option<u64>,
        /// Run on the calling thread only.
        #[arg(long)]
        sequential: bool,
    },
    /// Run the acceptance checks and print a pass/fail table.
    Verify {
        /// Print the check names without running them.
        #[arg(long)]
        list: bool,
        /// Run only these checks (repeatable).
        #[arg(long = "check", value_name = "ID")]
        checks: Vec<u8>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn fail(e: ExperimentError) -> ExitCode {
    eprintln!("erasot: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn setup_threads(threads: Option<usize>) -> Result<(), ExperimentError> {
    match threads {
        Some(t) => configure_threads(t).map_err(|e| ExperimentError::Config(e.to_string())),
        None => Ok(()),
    }
}

fn run(
    config: PathBuf,
    out: Option<PathBuf>,
    threads: Option<usize>,
    seed: Option<u64>,
    sequential: bool,
) -> Result<ExitCode, ExperimentError> {
    setup_threads(threads)?;
    let text = std::fs::read_to_string(&config)
        .map_err(|e| ExperimentError::Config(format!("{}: {e}", config.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = seed {
        cfg.master_seed = seed;
    }
    let dir = out.or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("."));
    let exec = if sequential { Execution::Sequential } else { Execution::Parallel };

    let start = Instant::now();
    let report = run_experiment(&cfg, exec)?;
    let wall = start.elapsed().as_secs_f64();

    std::fs::create_dir_all(&dir).map_err(|e| ExperimentError::Io(format!("{}: {e}", dir.display())))?;
    report.write(&dir)?;
    let timing = serde_json::json!({ "wall_seconds": wall, "execution": exec });
    write_atomic(&dir, "timing.json", format!("{timing:#}\n").as_bytes())?;
    eprintln!("wall time {wall:.2}s; {} rows written to {}", report.rows.len(), dir.display());

    let failures = report.invariant_failures();
    if failures > 0 {
        eprintln!("erasot: {failures} row(s) with invariant failures");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn verify(list: bool, checks: Vec<u8>, threads: Option<usize>) -> Result<ExitCode, ExperimentError> {
    if list {
        for (id, name) in acceptance::list() {
            println!("{id}. {name}");
        }
        return Ok(ExitCode::SUCCESS);
    }
    setup_threads(threads)?;
    let ids: Vec<u8> = if checks.is_empty() { acceptance::list().iter().map(|c| c.0).collect() } else { checks };
    let mut all_passed = true;
    for id in ids {
        let start = Instant::now();
        let r = acceptance::run(id, Execution::Parallel)?;
        println!("{r}");
        eprintln!("  check {id} took {:.1}s", start.elapsed().as_secs_f64());
        all_passed &= r.passed;
    }
    Ok(if all_passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, threads, seed, sequential } => run(config, out, threads, seed, sequential),
        Command::Verify { list, checks, threads } => verify(list, checks, threads),
    };
    result.unwrap_or_else(fail)
}
