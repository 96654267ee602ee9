//! Command-line experiments on top of the `photonic` simulator.
//!
//! Every command writes its primary result to standard output (or `--out`)
//! and diagnostics to standard error. See [`app::run`] for the dispatch and
//! [`error::CliError::exit_code`] for the exit-code contract.

pub mod app;
pub mod bench;
pub mod config;
pub mod error;
pub mod fourier;
pub mod gram;
pub mod moons;
pub mod simulate;
pub mod verify;

pub use error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}
