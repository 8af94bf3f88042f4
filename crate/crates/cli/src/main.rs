//! `svmf` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 internal error.

mod args;
mod commands;
mod error;
mod table;

use std::io::Write;
use std::panic;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::{CliError, CliResult};

fn run(cli: &Cli) -> CliResult<String> {
    match &cli.command {
        Command::Fingerprint(a) => commands::fingerprint(a),
        Command::Index(a) => commands::index(a),
        Command::Search(a) => commands::search(a),
        Command::Rank(a) => commands::rank(a),
        Command::EvalDetect(a) => commands::eval_detect(a),
        Command::EvalRetrieval(a) => commands::eval_retrieval(a),
        Command::Gen(a) => commands::gen(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = panic::catch_unwind(|| run(&cli))
        .unwrap_or_else(|_| Err(CliError::Internal("unexpected panic".into())));
    match outcome {
        Ok(text) => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: writing output: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
