use std::fmt;

use thiserror::Error;

/// Which re-check of [`crate::control::verify_solution`] rejected a perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerificationCheck {
    ConstraintResidual,
    Mask,
    Optimality,
}

impl fmt::Display for VerificationCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            VerificationCheck::ConstraintResidual => "constraint residual",
            VerificationCheck::Mask => "mask",
            VerificationCheck::Optimality => "optimality",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),

    #[error("infeasible: the sparsity mask cannot realize the invariance constraint (KKT residual {kkt_residual:.3e} > threshold {threshold:.3e})")]
    Infeasible { kkt_residual: f64, threshold: f64 },

    #[error("cannot apply an infeasible perturbation result")]
    InfeasibleResult,

    #[error("verification failed ({check}): {detail}")]
    VerificationFailed {
        check: VerificationCheck,
        detail: String,
    },

    #[error("state became non-finite after t = {last_valid_time}")]
    NonFiniteState { last_valid_time: f64 },

    #[error("{field}: {message}")]
    Schema { field: String, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
