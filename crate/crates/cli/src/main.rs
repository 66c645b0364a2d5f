use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::Parser;
use toricsol_cli::{run, Cli, CliError, RunConfig};

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(64),
            };
        }
    };
    let cfg = match RunConfig::from_cli(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let echo = std::iter::once("toricsol").chain(argv.iter().skip(1).map(String::as_str)).collect::<Vec<_>>().join(" ");
    let start = Instant::now();
    let outcome = run(&cfg, &echo);
    eprintln!("wall time: {:.3} s", start.elapsed().as_secs_f64());
    match outcome {
        Ok(report) => {
            print!("{}", report.to_json());
            match report.first_failure() {
                Some(c) => {
                    eprintln!("{}", CliError::Verification(format!("{} = {} (tolerance {})", c.name, c.value, c.tolerance)));
                    ExitCode::from(1)
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            if let CliError::Continuation { report: Some(r), .. } = &e {
                print!("{}", r.to_json());
            }
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
