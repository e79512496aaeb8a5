use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use slpd::runner::{check_suite, load_config, run_batch, run_experiment};
use slpd::Execution;

/// Config-driven runner for the single-loop primal-dual solver.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// Run sampling checks, oracles and batches on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config.
    Solve { config: PathBuf },
    /// Run every *.json config in a directory.
    Batch { dir: PathBuf },
    /// Run the invariant checks.
    Check,
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c.clamp(0, 255) as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let exec = if cli.sequential { Execution::Sequential } else { Execution::default() };
    match cli.command {
        Command::Solve { config } => {
            let result = load_config(&config).and_then(|cfg| run_experiment(&cfg, exec));
            match result {
                Ok(summary) => {
                    println!("{summary}");
                    code(summary.exit_code)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    code(e.exit_code())
                }
            }
        }
        Command::Batch { dir } => match run_batch(&dir, exec) {
            Ok(results) => {
                let mut worst = 0;
                for (file, r) in results {
                    match r {
                        Ok(s) => {
                            println!("{}: {s}", file.display());
                            worst = worst.max(s.exit_code);
                        }
                        Err(e) => {
                            println!("{}: error: {e}", file.display());
                            worst = worst.max(e.exit_code());
                        }
                    }
                }
                code(worst)
            }
            Err(e) => {
                eprintln!("error: {e}");
                code(e.exit_code())
            }
        },
        Command::Check => {
            let outcomes = check_suite(exec);
            for o in &outcomes {
                println!("{o}");
            }
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            println!("{} checks, {failed} failed", outcomes.len());
            code(if failed == 0 { 0 } else { 1 })
        }
    }
}
