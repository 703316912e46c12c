use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use patchgen_cli::args::{Cli, Command};
use patchgen_cli::{exit_code, generate, init_workers, report, run_validate, ValidationFailed};

fn run(cli: Cli) -> anyhow::Result<()> {
    init_workers()?;
    match cli.command {
        Command::Generate(args) => {
            let dirs = generate::run_generate(&args).context("generate")?;
            for d in dirs {
                println!("{}", d.display());
            }
        }
        Command::Metrics(args) => {
            let r = report::run_metrics(&args).context("metrics")?;
            print!("{}", r.to_table());
        }
        Command::Validate(args) => {
            let r = run_validate(&args).context("validate")?;
            print!("{}", r.summary());
            if !r.passed() {
                return Err(ValidationFailed {
                    oracle: r.oracle_failures,
                    overlap: r.overlap_failures,
                }
                .into());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
