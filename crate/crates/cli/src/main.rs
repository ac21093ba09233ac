use std::process::ExitCode;

use clap::Parser;
use wasstree_cli::{run, Cli};

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(report) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            if report.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
