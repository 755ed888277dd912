//! `stagdid`: batch front end for the staggered-adoption DiD library.
//!
//! Exit codes: 0 success, 2 usage/configuration error, 3 data/estimation
//! error. Errors are single lines on standard error.

mod args;
mod commands;
mod csvio;
mod error;
mod output;

use clap::Parser;

use crate::args::Cli;
use crate::error::CliError;

/// Expands `--config FILE` (one `key value` or `key = value` per line,
/// `#` comments) into flags. Keys already present on the command line win.
fn expand_config(mut argv: Vec<String>) -> Result<Vec<String>, CliError> {
    let Some(pos) = argv.iter().position(|a| a == "--config") else {
        return Ok(argv);
    };
    if pos + 1 >= argv.len() {
        return Err(CliError::Usage(String::from("--config needs a file path")));
    }
    let path = argv.remove(pos + 1);
    argv.remove(pos);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read config {path}: {e}")))?;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = match line.split_once('=') {
            Some((k, v)) => (k.trim(), v.trim()),
            None => match line.split_once(char::is_whitespace) {
                Some((k, v)) => (k.trim(), v.trim()),
                None => (line, ""),
            },
        };
        let flag = format!("--{key}");
        if argv.contains(&flag) {
            continue;
        }
        argv.push(flag);
        if !value.is_empty() {
            argv.push(String::from(value));
        }
    }
    Ok(argv)
}

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    let argv = match expand_config(argv) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            let first_line = e.to_string().lines().next().unwrap_or("bad arguments").to_string();
            eprintln!("error[usage]: {first_line}");
            std::process::exit(2);
        }
    };
    if let Err(e) = commands::run(cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
