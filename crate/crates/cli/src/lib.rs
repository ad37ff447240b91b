//! Experiment harness for `invopt-core`: run configs, fixtures, subcommand
//! bodies and scaling benchmarks. The `invopt` binary is a thin wrapper.

pub mod bench;
pub mod commands;
pub mod config;
pub mod error;
pub mod fixture;
pub mod output;

pub use error::{CliError, CliResult};
