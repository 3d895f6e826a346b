use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VADKIT_LOG", "warn")).init();
    let cli = vadkit::cli::Cli::parse();
    match vadkit::cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("vadkit: error: {msg}");
            ExitCode::FAILURE
        }
    }
}
