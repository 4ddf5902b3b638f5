//! Least-squares identification of linear systems under training-data
//! poisoning: trajectory simulation, closed-form error algebra, optimization
//! based attack synthesis, and a statistical detection suite.
//!
//! The crate is organized bottom-up:
//!
//! - [`numerics`]: pseudoinverse, matrix exponential, distribution CDFs,
//!   seeded sampling. Everything above is deterministic given seeds.
//! - [`lti`]: discrete-time LTI simulation and the datasets it produces.
//! - [`regression`]: least-squares fits, residual/error identities, and
//!   closed-form bounds on poisoned estimates.
//! - [`attacks`]: poisoning signal synthesis, from oblivious random noise to
//!   constraint-aware gradient optimization.
//! - [`detection`]: hypothesis tests a defender can run on a dataset.
//! - [`analysis`]: attacker-side diagnostics (membership, directional error,
//!   closed-form estimate shifts).
//! - [`io`]: JSON/CSV persistence for datasets, fits, attacks, and reports.

pub mod analysis;
pub mod attacks;
pub mod detection;
pub mod error;
pub mod io;
pub mod lti;
pub mod numerics;
pub mod regression;

pub use error::{Error, Result};

/// Dense row-major-addressed f64 matrix used across the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense f64 column vector.
pub type Vector = nalgebra::DVector<f64>;
