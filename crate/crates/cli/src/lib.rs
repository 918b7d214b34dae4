//! Batch front end: scenario runs, inference and defense on demand, and the
//! reproducible studies that emit CSV.

pub mod commands;
pub mod error;
pub mod experiments;
pub mod io;
pub mod spec;

pub use error::{CliError, CliResult};
pub use spec::{ExperimentKind, ExperimentSpec};
