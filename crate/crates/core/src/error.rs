use thiserror::Error;

/// Errors raised by the operators, penalties and solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdpError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is numerically singular ({context})")]
    SingularMatrix { context: String },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error(
        "loss increased for {window} consecutive steps at iteration {iteration} \
         (loss {loss:e}); try a smaller learning rate"
    )]
    Divergence {
        iteration: usize,
        window: usize,
        loss: f64,
    },

    /// No operator can realize the requested minimizer: the pairing bound
    /// `alpha * <v, x> <= |y|^2 / 4` is violated.
    #[error(
        "infeasible: alpha * <v, x> = {pairing:e} exceeds |y|^2 / 4 = {bound:e}, \
         so no linear operator has this point as its regularized solution"
    )]
    Infeasible { pairing: f64, bound: f64 },

    #[error("vector is not a subgradient (violation {violation:e})")]
    InvalidSubgradient { violation: f64 },

    #[error("inconsistent input: {0}")]
    Inconsistent(String),
}

pub type Result<T, E = AdpError> = std::result::Result<T, E>;

pub(crate) fn invalid_param(name: &'static str, reason: impl Into<String>) -> AdpError {
    AdpError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
