//! Configuration, orchestration and output files for the `conewalk` binary.

pub mod config;
pub mod grammar;
pub mod run;
pub mod suites;

pub use config::{Config, ConfigError, Overrides};
pub use run::{execute, Experiment, RunError, RunSummary};
