use thiserror::Error;

/// Errors produced by the memory-capacity routines.
#[derive(Debug, Error)]
pub enum McError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix cannot be rescaled to a target spectral radius: {0}")]
    NotRescalable(String),

    #[error("echo state property violated: spectral radius {rho} >= 1")]
    EspViolation { rho: f64 },

    #[error("standardization infeasible: state covariance is numerically singular (condition estimate {condition:e})")]
    StandardizationInfeasible { condition: f64 },

    #[error("{what} is singular at working precision (condition estimate {condition:e})")]
    Singular { what: &'static str, condition: f64 },

    #[error("matrix is not diagonalizable with a distinct spectrum (minimum eigenvalue gap {min_gap:e})")]
    NotDiagonalizable { min_gap: f64 },

    #[error("complex evaluation left an imaginary residual of {residual:e}")]
    ImaginaryResidual { residual: f64 },

    #[error("autocovariance is not positive semidefinite (smallest Toeplitz eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("no Krylov truncation point exists: spectral radius {rho} >= 1")]
    NoTruncationPoint { rho: f64 },

    #[error("system is not regular: stationary covariance deviates from identity by {deviation:e}")]
    NotRegular { deviation: f64 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, McError>;
