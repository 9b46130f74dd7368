//! Configuration-driven runs of the `noneq-cat` simulator.

pub mod config;
pub mod error;
pub mod oracle_check;
pub mod run;
pub mod sweep;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
