//! Langevin and stochastic gradient dynamics on synthetic energy landscapes
//! and small-network training losses, with exact Boltzmann oracles and
//! flatness measurements.
//!
//! - [`potentials`]: analytic landscapes and the empirical-loss adapter
//! - [`dynamics`]: GD/SGD/GDL/SGDL update rules and trajectory sampling
//! - [`boltzmann`]: quadrature and rejection-sampling ground truth for
//!   `p(w) ∝ exp(−U(w)/T)`
//! - [`analysis`]: histograms, basin occupancy, flatness radius, simplex
//!   interpolation and gradient-noise statistics
//! - [`model`]: a fully connected network with backprop, datasets, trainer
//! - [`experiments`]: the named experiment runner behind the CLI

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod analysis;
pub mod boltzmann;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod model;
pub mod potentials;
pub mod rng;

pub use error::{Error, Result};
