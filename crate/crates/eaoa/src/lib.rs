//! Experiment tooling around [`eaoa_core`]: feature dataset files,
//! configuration, the multi-round harness, reports and the command line.

pub mod cli;
pub mod config;
pub mod dataset_file;
mod error;
pub mod harness;
pub mod report;

pub use error::{Error, Result};
