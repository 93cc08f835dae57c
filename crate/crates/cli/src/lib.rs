//! The `ecgnet` command line: argument parsing, run configuration and the
//! five commands (synth, train, evaluate, explain, baseline).

pub mod args;
pub mod commands;
pub mod config;

use clap::Parser;

pub use args::Cli;
pub use commands::UsageError;
pub use config::RunConfig;

/// Parses `argv`, runs the command and returns the process exit status:
/// 0 on success, 2 for usage errors, 1 for runtime failures.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = cli
        .resolve()
        .and_then(|cfg| commands::run(&cli.command, cfg));
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}: {e:#}", cli.command.name());
            if e.downcast_ref::<UsageError>().is_some() {
                2
            } else {
                1
            }
        }
    }
}
