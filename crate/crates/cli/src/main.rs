mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

/// Outcome of a subcommand that did not succeed.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or inconsistent inputs: exit 2.
    Usage(String),
    /// IO, backend or evaluation failure: exit 1.
    Operational(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Operational(_) => 1,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = args::Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = match &f {
                Failure::Usage(m) | Failure::Operational(m) => m,
            };
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}
