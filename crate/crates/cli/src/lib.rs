//! Subcommands that regenerate the throughput and protocol-capacity curves
//! as CSV. Every table starts with one `# key=value,...` metadata line.

pub mod args;
pub mod commands;
pub mod error;
pub mod output;
pub mod scenario;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

pub use args::{Cli, Command};
pub use error::CliError;
pub use output::Table;
pub use scenario::Scenario;

/// Parses `argv`, runs the command and writes its CSV; returns the exit code.
/// Nothing is written unless the whole table was computed.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match commands::execute(&cli.command).and_then(|(csv, path)| write(&csv, path)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn write(csv: &[u8], path: Option<std::path::PathBuf>) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, csv)?,
        None => std::io::stdout().lock().write_all(csv)?,
    }
    Ok(())
}
