//! Experiment runner for the `qvec` engine.

pub mod config;
pub mod error;
pub mod experiment;
pub mod selftest;

pub use config::{parse_config, Overrides, RunConfig};
pub use error::CliError;
