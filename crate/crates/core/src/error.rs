//! Error taxonomy shared by every module in the crate.
//!
//! Errors are split by *who can fix them*: [`QcurvError::Config`] and
//! [`QcurvError::Validation`] point at the caller's inputs,
//! [`QcurvError::Ingestion`] at an external file, and the numerical variants
//! at genuine computational failures that a caller may want to catch and
//! report distinctly (drivers map them to different exit codes).

use thiserror::Error;

/// Unified error type for model construction, operators, and solvers.
#[derive(Debug, Error)]
pub enum QcurvError {
    /// Invalid or inconsistent configuration supplied by the caller
    /// (bad sizes, out-of-range parameters, unknown names).
    #[error("configuration error: {0}")]
    Config(String),

    /// An input violated a documented contract (mass mismatch, field living
    /// on a different model, non-admissible conformal factor, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// A mesh or data file could not be parsed or fails manifold checks.
    #[error("ingestion error: {0}")]
    Ingestion(String),

    /// The requested operation needs data this model cannot provide
    /// (for example node quadrature on a spectral-only factor).
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// A numerical routine failed to reach its accuracy contract.
    #[error("numerical failure in {what}: residual {residual:.3e} exceeds tolerance")]
    Numeric { what: String, residual: f64 },

    /// A linear solve aborted because the system is numerically singular.
    #[error("singular linearization: smallest singular value {sigma_min:.3e}")]
    SingularLinearization { sigma_min: f64 },

    /// Underlying I/O failure while reading or writing files.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Convenient alias used across the crate.
pub type Result<T> = std::result::Result<T, QcurvError>;

impl QcurvError {
    /// `true` for errors attributable to caller input (config, validation,
    /// ingestion, unsupported), `false` for internal numerical failures.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            QcurvError::Config(_)
                | QcurvError::Validation(_)
                | QcurvError::Ingestion(_)
                | QcurvError::Unsupported(_)
        )
    }
}
