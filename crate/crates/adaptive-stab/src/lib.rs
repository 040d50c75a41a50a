//! Certainty-equivalence adaptive control with regularised least squares: estimator,
//! excitation and invariance certificates, closed-form probabilistic bounds and a
//! Monte Carlo harness.

pub mod bounds;
pub mod certify;
pub mod config;
pub mod error;
pub mod examples;
pub mod estimator;
pub mod excitation;
pub mod linalg;
pub mod lipschitz;
pub mod lyapunov;
pub mod model;
pub mod noise;
pub mod region;
pub mod report;
pub mod rng;
pub mod rpi;
pub mod scalar;
pub mod sim;
pub mod sweep;

pub use error::{Error, Result};
