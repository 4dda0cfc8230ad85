use std::path::PathBuf;

use nalgebra::Complex;

/// Errors raised across the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("branch {id} ({from}-{to}) has zero series impedance")]
    DegenerateBranch { id: usize, from: usize, to: usize },

    #[error("load at bus {bus} sits on a zero-magnitude voltage")]
    SingularLoad { bus: usize },

    #[error("eliminated admittance block is singular (condition estimate {condition:.3e})")]
    ReductionSingular { condition: f64 },

    #[error("admittance matrix is not symmetric (max |Y - Y^T| = {asymmetry:.3e})")]
    NonSymmetricAdmittance { asymmetry: f64 },

    #[error("branch not found: {0}")]
    BranchNotFound(String),

    #[error("invalid case: {0}")]
    InvalidCase(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("equilibrium solve did not converge in {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("state matrix is not Hurwitz (rightmost real part {max_real:.3e})")]
    NotHurwitz { max_real: f64 },

    #[error("simulation diverged in segment {segment} at t = {time:.2} s (angle excursion {excursion:.3} rad)")]
    Unstable {
        segment: usize,
        time: f64,
        excursion: f64,
    },

    #[error("rate error: {0}")]
    Rate(String),

    #[error("window holds {samples} samples, need at least 2")]
    SampleSize { samples: usize },

    #[error("angle covariance is ill-conditioned (condition {condition:.3e}); try a longer window")]
    IllConditioned { condition: f64 },

    #[error("nonpositive speed variance for machine {machine}")]
    DegenerateCovariance { machine: usize },

    #[error("reference matrix has zero norm")]
    ZeroReference,

    #[error("eigenvalue iteration did not converge ({} eigenvalues recovered)", partial.len())]
    EigenNonConvergence { partial: Vec<Complex<f64>> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl Error {
    /// True for errors caused by user input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Io { .. }
                | Error::Parse { .. }
                | Error::InvalidCase(_)
                | Error::BranchNotFound(_)
                | Error::Rate(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
