use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pricelaw::config::ExperimentConfig;
use pricelaw::runner::{self, RunOptions};

/// Exit codes: 0 success, 2 config error, 3 numerical failure, 4 failed check.
#[derive(Parser)]
#[command(version, about = "Late-time wave decay experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment into a new run directory.
    Run {
        config: PathBuf,
        /// Reuse `<output>/<hash8>` instead of a new timestamped directory.
        #[arg(long)]
        in_place: bool,
        /// Override `output.directory`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the cross product of the `[sweep]` ranges in parallel.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        in_place: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Verify a run directory against its manifest and print its summaries.
    Report { run_dir: PathBuf },
    /// Fast internal consistency checks.
    Selftest,
}

fn fail(e: pricelaw::Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match cli.command {
        Command::Run { config, in_place, output } => {
            let cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            match runner::run(&cfg, &RunOptions { in_place, output_root: output }) {
                Ok(out) => {
                    println!("{}", out.dir.display());
                    for c in &out.manifest.checks {
                        println!(
                            "{} {}: observed {:?}, expected {} ± {}",
                            verdict(c.passed),
                            c.name,
                            c.observed,
                            c.expected,
                            c.tolerance
                        );
                    }
                    ExitCode::from(if out.manifest.passed() { 0 } else { 4 })
                }
                Err(e) => fail(e),
            }
        }
        Command::Sweep { config, in_place, output } => {
            let cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            match runner::sweep(&cfg, &RunOptions { in_place, output_root: output }) {
                Ok(out) => {
                    println!("{} ({} workers)", out.dir.display(), out.report.workers);
                    for c in &out.report.cells {
                        let detail = c.error.clone().unwrap_or_else(|| format!("p_final {:?}", c.p_final));
                        println!("{:?} {}: {detail}", c.status, c.cell.key);
                    }
                    ExitCode::from(out.report.exit_code() as u8)
                }
                Err(e) => fail(e),
            }
        }
        Command::Report { run_dir } => match runner::report(&run_dir) {
            Ok(v) => {
                let m = &v.manifest;
                println!("config {} (tool {})", m.config_hash, m.tool_version);
                println!("started {} finished {}", m.started, m.finished);
                for (k, s) in &m.summaries {
                    println!("{k}: {s}");
                }
                for c in &m.checks {
                    println!("{} {}", verdict(c.passed), c.name);
                }
                for f in &v.mismatches {
                    println!("MISMATCH {f}");
                }
                ExitCode::from(if v.intact() && m.passed() { 0 } else { 4 })
            }
            Err(e) => fail(e),
        },
        Command::Selftest => {
            let checks = runner::selftest();
            for c in &checks {
                println!("{} {}: {}", verdict(c.passed), c.name, c.detail);
            }
            ExitCode::from(if checks.iter().all(|c| c.passed) { 0 } else { 4 })
        }
    }
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}
