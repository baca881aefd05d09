//! Error and check-status types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum Error {
    /// Operands live in different variable universes or matrix shapes differ.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A series operation whose Taylor sum does not terminate under the
    /// active truncation caps (e.g. exp of a nonzero constant).
    #[error("valuation error: {0}")]
    Valuation(String),

    /// A matrix that must be invertible is singular.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// Input fails the symplectic block identities.
    #[error("matrix is not symplectic: {0}")]
    NotSymplectic(String),

    /// Input fails the infinitesimal symplectic relations.
    #[error("matrix is not infinitesimal symplectic: {0}")]
    NotInfinitesimal(String),

    /// A configured combinatorial bound would be exceeded.
    #[error("capacity exceeded: {what} requires {requested}, bound is {limit}")]
    Capacity {
        what: &'static str,
        requested: usize,
        limit: usize,
    },

    /// A vertex tensor required by a graph contraction was not supplied.
    #[error("missing vertex tensor for (genus {genus}, valence {valence})")]
    MissingTensor { genus: u32, valence: usize },

    /// A stated operation precondition is violated.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A truncated operator exponential failed to terminate within the
    /// iteration guard; the result would be silently wrong, so we refuse.
    #[error("operator exponential did not terminate within {limit} iterations")]
    IterationLimit { limit: usize },

    /// An internal consistency trap fired; this indicates a bug.
    #[error("internal consistency failure: {0}")]
    Internal(String),

    #[error("parse error: {0}")]
    Parse(String),
}

/// Outcome of a verification check. `Indeterminate` means the active caps
/// are too small to decide the identity either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Indeterminate,
}

impl CheckStatus {
    pub fn is_pass(self) -> bool {
        matches!(self, CheckStatus::Pass)
    }

    /// Combine two statuses: any failure dominates, then indeterminacy.
    pub fn and(self, other: CheckStatus) -> CheckStatus {
        use CheckStatus::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (Indeterminate, _) | (_, Indeterminate) => Indeterminate,
            _ => Pass,
        }
    }
}

impl std::fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CheckStatus::Pass => write!(f, "pass"),
            CheckStatus::Fail => write!(f, "fail"),
            CheckStatus::Indeterminate => write!(f, "indeterminate"),
        }
    }
}
