//! Batch runner for the spacetree multigrid solvers: flat key/value
//! configurations, residual histories, grid dumps and run logs.

pub mod config;
pub mod output;
pub mod run;

pub use config::{ConfigError, GridSpec, RawConfig, RunConfig};
pub use run::{exit_code, run, run_with_sinks, RunError, RunOutcome, Sinks};
