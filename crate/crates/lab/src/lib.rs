//! Experiment runner for `snot-core`: JSON configs, CSV and JSON artifacts,
//! the named experiments and the invariant self-test.

pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod run;
pub mod selftest;

pub use error::{LabError, Result};
