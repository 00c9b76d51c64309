use std::process::ExitCode;

use clap::Parser;
use greedy_lab_cli::commands::Format;
use greedy_lab_cli::{execute, Cli, CliError, EXIT_CHECK_FAILED, EXIT_INPUT, EXIT_OK};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match execute(&cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let text = match cli.format {
        Format::Structured => outcome.report.to_structured(),
        Format::Tabular => outcome.report.to_tabular(),
    };
    match &cli.out {
        Some(path) => {
            if let Err(source) = std::fs::write(path, text) {
                eprintln!(
                    "error: {}",
                    CliError::Io {
                        path: path.clone(),
                        source
                    }
                );
                return ExitCode::from(EXIT_INPUT);
            }
        }
        None => print!("{text}"),
    }
    ExitCode::from(if outcome.failed { EXIT_CHECK_FAILED } else { EXIT_OK })
}
