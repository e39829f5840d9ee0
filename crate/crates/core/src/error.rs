use thiserror::Error;

use crate::solver::RunOutput;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which of the algorithm's parameter constraints has no admissible value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    /// `alpha_i + floor(1 - sigma) != 0` fails.
    InputCondition,
    /// The step-size interval `(0, gamma_max)` is empty.
    Gamma,
    /// The relaxation interval `(0, lambda_max_i)` is empty.
    Lambda,
}

impl std::fmt::Display for WindowKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WindowKind::InputCondition => f.write_str("alpha_i + floor(1 - sigma) != 0"),
            WindowKind::Gamma => f.write_str("gamma window"),
            WindowKind::Lambda => f.write_str("lambda window"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("empty parameter window ({kind}) at user {index}")]
    EmptyParameterWindow { index: usize, kind: WindowKind },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("hyperplane normal has zero norm")]
    ZeroNormal,

    #[error("user index {index} out of range for {users} users")]
    IndexOutOfRange { index: usize, users: usize },

    #[error("inclusion probability of user {0} is zero")]
    ZeroProbability(usize),

    #[error("non-finite iterate at iteration {k}")]
    NonFiniteIterate { k: usize },

    #[error("iteration cap reached after {} iterations", .0.state.k)]
    MaxItersExceeded(Box<RunOutput>),

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("block {block} is empty ({agents} agents for {samples} samples)")]
    EmptyBlock {
        block: usize,
        agents: usize,
        samples: usize,
    },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("labels are not binary: {0}")]
    NonBinaryLabels(String),

    #[error("no convergence to tolerance {tol:e} within {iters} iterations")]
    NoConvergence { tol: f64, iters: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
