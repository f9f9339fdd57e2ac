//! Core numerics for semi-dual neural optimal transport.
//!
//! Everything here is allocation-only (`alloc`, no `std`): weighted point
//! clouds and their samplers, an exact network-simplex transport solver with
//! 1D and brute-force companions, c-transforms on finite candidate sets, a
//! single-hidden-layer MLP with manual backpropagation and Adam, the max-min
//! training loop, noise schedules, evaluation metrics, and closed-form
//! reference maps. File formats, configuration parsing and the experiment
//! runner live in the `snot-lab` crate.
#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![warn(clippy::std_instead_of_core)]
#![warn(clippy::std_instead_of_alloc)]

extern crate alloc;

pub mod analytic;
pub mod ctransform;
pub mod discrete_ot;
mod error;
pub mod linalg;
pub mod math;
pub mod measures;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod schedule;
pub mod trainer;

pub use error::{Error, Result};
pub use linalg::Matrix;
