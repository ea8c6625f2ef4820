//! Command-line front end for the adaptbf simulator: scenario files,
//! result files and the `run`, `builtin` and `bench` commands.

pub mod commands;
pub mod error;
pub mod report;
pub mod scenario_file;

pub use error::{CliError, ErrorCode};
