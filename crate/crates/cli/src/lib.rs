//! Configuration, suites and artifact output of the `fracdrift` runner.

pub mod config;
pub mod output;
pub mod suites;

pub use config::{load_file, ConfigError, Experiment, Resolved, RunConfig};
pub use suites::{run, Run, RunError};
