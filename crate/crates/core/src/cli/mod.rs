//! Command-line front end: `fit`, `simulate` and `summarize`.
//!
//! Exit codes: 0 on success, 2 for invalid input or configuration, 3 for
//! numerical failures.

pub mod args;
pub mod chain_io;
mod commands;
pub mod plot;
pub mod report;

use clap::Parser;

pub use args::{Cli, Command, ConfigFile, Profile, RunConfig};
pub use commands::{
    cmd_fit, cmd_simulate, cmd_summarize, CHAIN_FILE, DIAGNOSTICS_FILE, PATTERNS_FILE, PROBABILITIES_FILE, RUN_FILE,
    SUMMARY_FILE, VALIDATION_FILE,
};

use crate::error::Result;

/// Environment variable giving the default worker thread count.
pub const THREADS_ENV: &str = "SWOLCA_THREADS";

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(&RunConfig::for_fit(a)?).map(drop),
        Command::Simulate(a) => cmd_simulate(&RunConfig::for_simulate(a)?).map(drop),
        Command::Summarize(a) => {
            let profiles = (!a.profile.is_empty()).then_some(a.profile.as_slice());
            cmd_summarize(&a.out, profiles, a.plot).map(drop)
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
