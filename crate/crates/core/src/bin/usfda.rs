use std::process::ExitCode;

use clap::Parser;
use usfda::cli::{error_kind, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if json {
                let payload = serde_json::json!({
                    "error": { "kind": error_kind(&err), "message": format!("{err:#}") }
                });
                eprintln!("{payload}");
            } else {
                eprintln!("error: {err:#}");
            }
            ExitCode::FAILURE
        }
    }
}
