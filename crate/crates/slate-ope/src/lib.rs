//! IO, experiment harness and command-line interface for slate off-policy
//! evaluation. The estimators themselves live in `slate_ope_core`.

pub mod cli;
pub mod error;
pub mod harness;
pub mod io;

pub use error::{AppError, Result};
