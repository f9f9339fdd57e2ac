//! One module per CLI command that runs an experiment.

pub mod conditioning;
pub mod slope;
pub mod terminal;
pub mod trace;
pub mod train;
