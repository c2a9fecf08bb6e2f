//! Experiment driver for the `wdpd` command: a JSON config in, CSV and JSON
//! artifacts out.

pub mod commands;
pub mod config;
pub mod error;

pub use config::{ExperimentConfig, PaSelection};
pub use error::{CliError, CliResult};
