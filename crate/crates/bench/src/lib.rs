//! File formats, experiment configuration, trial running and aggregation
//! behind the `scsolve` command line.

pub mod aggregate;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod format;
pub mod mm;

pub use error::{BenchError, Result};
