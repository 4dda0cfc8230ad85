//! Ambient-data estimation of power-system dynamic state Jacobians.

pub mod error;
pub mod linalg;
pub mod netmodel;
pub mod dynamics;
pub mod simulator;
pub mod estimator;
pub mod detector;
pub mod spectral;
pub mod scenario;
pub mod io;
pub mod pipeline;

pub use error::{Error, Result};
