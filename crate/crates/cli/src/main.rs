mod args;
mod commands;
mod error;
mod svg;

use clap::error::ErrorKind;
use clap::Parser;
use std::io::Write;

use args::{Cli, Command, RunConfig};
use error::CliError;

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("FRM_THREADS") else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("FRM_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::usage(format!("cannot size the worker pool: {e}")))
}

fn dispatch(command: &Command) -> Result<(&'static str, commands::Written), CliError> {
    configure_threads()?;
    let cfg = RunConfig::resolve(command.options())?;
    Ok(match command {
        Command::Frm(_) => ("frm", commands::frm(&cfg)?),
        Command::Covar(_) => ("covar", commands::covar(&cfg)?),
        Command::Network(_) => ("network", commands::network(&cfg)?),
        Command::Portfolio(_) => ("portfolio", commands::portfolio(&cfg)?),
        Command::Backtest(_) => ("backtest", commands::backtest(&cfg)?),
        Command::Synth(_) => ("synth", commands::synth(&cfg)?),
        Command::Report(_) => ("report", commands::report(&cfg)?),
    })
}

fn fail(e: &CliError) -> i32 {
    eprintln!("{}", e.to_json());
    e.exit_code()
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            std::process::exit(0);
        }
        Err(e) => std::process::exit(fail(&CliError::usage(e.to_string().trim_end()))),
    };
    match dispatch(&cli.command) {
        Ok((name, files)) => {
            let files: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
            // a closed stdout is not a failure of the run
            let _ = writeln!(std::io::stdout(), "{}", serde_json::json!({ "command": name, "files": files }));
        }
        Err(e) => std::process::exit(fail(&e)),
    }
}
