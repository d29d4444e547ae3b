//! The `mcseg` command line: phantom synthesis, PCA, training, prediction,
//! evaluation, baselines, the end-to-end pipeline and benchmarking.
//!
//! Every computation is single-threaded with a fixed reduction order, so
//! outputs are bit-for-bit reproducible; `MCSEG_THREADS` is validated and
//! recorded but cannot raise parallelism.

pub mod args;
pub mod commands;
pub mod dataset;
pub mod error;
pub mod manifest;

use std::ffi::OsString;

use clap::Parser;

pub use args::{Cli, Command};
pub use commands::execute;
pub use error::{CliError, CliResult};
pub use manifest::RunManifest;

/// Parses `args` (program name first) and runs the command; returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        (_, Ok(())) => error::EXIT_OK,
        (_, Err(e)) => e.exit_code(),
    }
}
