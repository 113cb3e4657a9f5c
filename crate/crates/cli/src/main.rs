use std::process::ExitCode;

use clap::Parser;
use gradlab_harness::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = gradlab_harness::configure_threads().and_then(|()| gradlab_harness::run(&cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gradlab {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
