mod cli;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SEMAND_LOG", "info"))
        .format_timestamp(None)
        .init();
    let args = match cli::Cli::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            if !usage {
                return ExitCode::SUCCESS;
            }
            eprintln!("error kind=usage message={}", serde_json::json!(e.kind().to_string()));
            return ExitCode::from(2);
        }
    };
    match cli::run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={} message={}", e.kind(), serde_json::json!(e.to_string()));
            // configuration problems are usage errors, everything else is data
            ExitCode::from(if matches!(e, semand::Error::Config(_)) { 2 } else { 1 })
        }
    }
}
