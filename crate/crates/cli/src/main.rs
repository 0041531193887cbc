use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ranklab_core::exec::Execution;
use ranklab_core::scenario::{run_scenario, run_suite, suite_exit_code, RunOptions, EXIT_ERROR};

mod formats;

#[derive(Parser)]
#[command(name = "ranklab", version, about = "Constant rank verification lab")]
struct Cli {
    /// Run sweeps on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file.
    Run {
        config: PathBuf,
        /// Output directory (default: the config's `output`, else out/<name> next to it).
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run every *.toml scenario in a directory.
    Suite { dir: PathBuf },
    /// Describe the config schema and the output file formats.
    Formats,
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c.clamp(0, 255) as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match cli.command {
        Command::Formats => {
            print!("{}", formats::TEXT);
            ExitCode::SUCCESS
        }
        Command::Run { config, out } => {
            let o = run_scenario(&config, &RunOptions { exec, output: out });
            let status = match o.exit_code {
                0 => "pass",
                2 => "violation",
                _ => "error",
            };
            println!("{}: {status} (exit {})", config.display(), o.exit_code);
            if let Some(f) = &o.first_failure {
                eprintln!("first failure: {f}");
            }
            if let Some(d) = &o.output_dir {
                println!("artifacts: {}", d.display());
            }
            code(o.exit_code)
        }
        Command::Suite { dir } => match run_suite(&dir, exec) {
            Err(e) => {
                eprintln!("error: {e}");
                code(EXIT_ERROR)
            }
            Ok(entries) => {
                for e in &entries {
                    let o = &e.outcome;
                    let mark = if o.as_expected() { "ok  " } else { "FAIL" };
                    println!(
                        "{mark} {} exit {} (expected {})",
                        e.config.display(),
                        o.exit_code,
                        o.expect_exit
                    );
                    if let (false, Some(f)) = (o.as_expected(), &o.first_failure) {
                        println!("     {f}");
                    }
                }
                code(suite_exit_code(&entries))
            }
        },
    }
}
