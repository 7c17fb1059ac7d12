//! Batch front end for `popdyn`: scenario files, seeded ensemble runs with
//! oracle comparisons, and the acceptance suite.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod report;
pub mod scenario;

pub use error::{CliError, Result};
