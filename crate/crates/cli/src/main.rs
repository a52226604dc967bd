//! `ksh`: command-line front end of `ksh-core`.
//!
//! Exit codes: 0 on success, 2 when inputs or parameters are rejected, 3 when
//! an assertion of `verify` fails.

mod cli;
mod gen;
mod inputs;
mod output;
mod run;
mod verify;

use std::process::ExitCode;

use clap::Parser;

use crate::cli::{Cli, Command};

const EXIT_INVALID: u8 = 2;
const EXIT_ASSERTION: u8 = 3;

fn execute(cli: &Cli) -> anyhow::Result<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            anyhow::bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Gen(g) => gen::run(g)?,
        Command::Energy(a) => run::energy(a, cli.format)?,
        Command::Solve(a) => run::solve_cmd(a, cli.format)?,
        Command::Multistart(a) => run::multistart(a, cli.format)?,
        Command::Verify(v) => return verify::run(v, cli.format),
        Command::SweepR(a) => run::sweep_r(a, cli.format)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("ksh: verification failed");
            ExitCode::from(EXIT_ASSERTION)
        }
        Err(e) => {
            eprintln!("ksh: {e:#}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}
