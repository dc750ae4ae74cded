//! Learning discontinuous parameter-to-trajectory maps for optimal control.
//!
//! The pipeline has four stages, one module group each:
//!
//! 1. [`ocp`] + [`sqp`]: define parametric trajectory-optimization problems over
//!    four benchmark systems and solve them by direct transcription + SQP.
//! 2. [`dataset`]: grow databases of solved problems by bootstrap multi-start
//!    and nearest-neighbor warm starting, then split and standardize them.
//! 3. [`cluster`] + [`nn`] + [`moe`]: partition the solutions into behavior
//!    classes and fit either a single network or a mixture of experts
//!    (classifier + per-class regressors) to the parameter-to-solution map.
//! 4. [`rollout`]: validate learned predictions in closed loop with LQR
//!    trajectory tracking on the true dynamics.
//!
//! [`pipeline`] wires the stages together behind named presets; the `trajmoe`
//! binary exposes them on the command line.

pub mod cluster;
pub mod dataset;
pub mod moe;
pub mod nn;
pub mod ocp;
pub mod pipeline;
pub mod rollout;
pub mod selfcheck;
pub mod sqp;

mod error;

pub use error::Error;

/// Convenience alias used throughout: dynamic column vector of f64.
pub type DVec = nalgebra::DVector<f64>;
/// Convenience alias used throughout: dynamic matrix of f64.
pub type DMat = nalgebra::DMatrix<f64>;
