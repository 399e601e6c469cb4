//! `lapse-urn` command-line front end.
//!
//! Exit codes: 0 ok, 2 invalid input, 3 quantity undefined in the model's
//! regime, 4 a statistical check failed (its report is still written).

mod args;
mod commands;
mod config;

use std::process::exit;

use clap::Parser;

fn main() {
    let args = match config::expand(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            exit(2);
        }
    };
    let cli = args::Cli::try_parse_from(args).unwrap_or_else(|e| e.exit());
    let code = match commands::run(cli.command) {
        Ok(true) => 0,
        Ok(false) => 4,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    exit(code);
}
