mod args;
mod commands;
mod reproduce;
mod svg;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Bad flags or inputs that fail validation.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Fits that ran out of iterations, by rank.
#[derive(Debug)]
pub struct NotConverged(pub Vec<usize>);

impl std::fmt::Display for NotConverged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "fit did not converge for ranks {:?}", self.0)
    }
}

impl std::error::Error for NotConverged {}

/// 2: usage or validation, 3: data, 4: numerical failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if cause.is::<NotConverged>() {
            return 4;
        }
        if let Some(e) = cause.downcast_ref::<leadlag_core::Error>() {
            return if e.is_validation() {
                2
            } else if e.is_numerical() {
                4
            } else {
                3
            };
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Spectrum(a) => commands::spectrum(a),
        Command::Fit(a) => commands::fit(a),
        Command::Reproduce(a) => reproduce::run(a),
        Command::Plot(a) => commands::plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
