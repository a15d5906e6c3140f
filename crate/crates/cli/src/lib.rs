//! Command-line driver: configuration loading and hashing, SNSV1 snapshots,
//! and the `run`, `resume`, `sweep`, `verify`, `calibrate` and `patch-demo`
//! subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod snapshot;

pub use error::{CliError, CliResult};
