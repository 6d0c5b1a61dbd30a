//! `akb` — scenario runner for the anticipative filtering toolkit.
//!
//! Exit codes: 0 on success, 2 on model/configuration validation failure,
//! 3 on numerical failure.

mod args;
mod commands;
mod report;

use std::process::ExitCode;

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    if argv.is_empty() || argv[0] == "help" || argv[0] == "--help" || argv[0] == "-h" {
        commands::help();
        return ExitCode::SUCCESS;
    }
    let parsed = match args::Args::parse(argv.into_iter()) {
        Ok(parsed) => parsed,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let result = match parsed.command.as_str() {
        "kernel" => commands::kernel(&parsed),
        "simulate" => commands::simulate(&parsed),
        "filter" => commands::filter(&parsed),
        "ratios" => commands::ratios(&parsed),
        "stability" => commands::stability(&parsed),
        "volterra" => commands::volterra(&parsed),
        "particle" => commands::particle(&parsed),
        "converge" => commands::converge(&parsed),
        "strategies" => commands::strategies(&parsed),
        other => {
            eprintln!("error: unknown subcommand '{other}'; try 'akb help'");
            return ExitCode::from(2);
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1))
        }
    }
}
