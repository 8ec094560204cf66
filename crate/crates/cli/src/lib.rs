//! File-driven front end for `trichotomy-core`: system documents in,
//! deterministic JSON reports out.

pub mod commands;
pub mod document;
pub mod error;

pub use commands::{run, Command, Options, Outcome, Preset};
pub use error::{CliError, CliResult};
