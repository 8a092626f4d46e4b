use thiserror::Error;

use crate::experiments::DominanceReport;
use crate::solver::CrossValidation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix {matrix} is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd {
        matrix: &'static str,
        min_eigenvalue: f64,
    },

    #[error("matrix {matrix} is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPd {
        matrix: &'static str,
        min_eigenvalue: f64,
    },

    #[error("horizon must be at least 1")]
    NonPositiveHorizon,

    #[error("communication penalty must be finite and nonnegative, got {0}")]
    InvalidLambda(f64),

    #[error("S_{step} = R + B'P B is not positive definite")]
    SingularS { step: usize },

    #[error("window mismatch: {0}")]
    WindowMismatch(String),

    #[error("window of length {len} exceeds the brute-force limit of {max}")]
    WindowTooLarge { len: usize, max: usize },

    #[error("assignment length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("malformed problem: {0}")]
    MalformedProblem(String),

    #[error("solvers disagree: {0}")]
    OracleDisagreement(Box<CrossValidation>),

    #[error("certificate soundness violated: {0}")]
    SoundnessViolation(String),

    #[error("MPC dominance ordering violated: {}", .0.summary())]
    StatisticalViolation(Box<DominanceReport>),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the command-line front-end.
    ///
    /// 2 covers numerical and validation failures, 3 covers property violations.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::OracleDisagreement(_)
            | Error::SoundnessViolation(_)
            | Error::StatisticalViolation(_) => 3,
            _ => 2,
        }
    }

    /// Stable identifier printed in `ERROR[<code>]:` diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::NotPsd { .. } => "not_psd",
            Error::NotPd { .. } => "not_pd",
            Error::NonPositiveHorizon => "non_positive_horizon",
            Error::InvalidLambda(_) => "invalid_lambda",
            Error::SingularS { .. } => "singular_s",
            Error::WindowMismatch(_) => "window_mismatch",
            Error::WindowTooLarge { .. } => "window_too_large",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::MalformedProblem(_) => "malformed_problem",
            Error::OracleDisagreement(_) => "oracle_disagreement",
            Error::SoundnessViolation(_) => "soundness_violation",
            Error::StatisticalViolation(_) => "statistical_violation",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
