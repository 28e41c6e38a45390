//! Command-line front end: TOML scenario files in, CSV tables out.
//!
//! The binary `corrdiv` wraps [`cmd_run`], [`cmd_compare`] and
//! [`cmd_calibrate`]; the functions are public so they can be driven from
//! tests and scripts without spawning a process.

pub mod app;
pub mod commands;
pub mod error;
pub mod output;
pub mod scenario_file;

pub use commands::{cmd_calibrate, cmd_compare, cmd_run, CalibrateOutcome, CompareOutcome, Overrides, RunOutcome};
pub use error::CliError;
pub use scenario_file::{parse, ScenarioFile};
