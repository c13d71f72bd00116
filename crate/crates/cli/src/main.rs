mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;
use latsep::Error;

use crate::args::{Cli, Command};

/// 0 success, 1 internal, 2 input or configuration, 3 too little data,
/// 4 artifacts that do not belong together.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InsufficientSamples(_)
        | Error::InsufficientPoints { .. }
        | Error::MissingEndpoint(_)
        | Error::DegenerateVariance(_) => 3,
        Error::MismatchedRuns(_) | Error::MismatchedAttributes(_) => 4,
        Error::Numerical(_) | Error::DegenerateConditional(_) | Error::DegenerateInputs(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.global.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.global.jobs)
            .build_global()
        {
            eprintln!("error: cannot start {} worker threads: {e}", cli.global.jobs);
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Separation(a) => commands::separation(&cli.global, a),
        Command::Sweep(a) => commands::sweep(&cli.global, a),
        Command::Correlate(a) => commands::correlate(&cli.global, a),
        Command::Bound(a) => commands::bound(&cli.global, a),
        Command::Synth(a) => commands::synth(&cli.global, a),
        Command::Fit(a) => commands::fit(&cli.global, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Validation(violations) = &e {
                for v in violations {
                    eprintln!("  {v}");
                }
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
