use crate::error::{invalid_param, AdpError, Result};
use crate::operators::{LinearOp, Signal};
use crate::penalties::Penalty;
use crate::scalar::Real;

/// A linear inverse problem `A x = y` with noisy data and the ADP weights.
///
/// `alpha` scales the penalty in the inner problem
/// `min_x |B x - y|^2 / 2 + alpha R(x)`; with an elastic net the effective
/// weights are `(alpha * alpha1, alpha * alpha2)`. `beta` is the weight of
/// the proximity term `beta |B - A|_F^2` (zero for plain ADP) and `delta`
/// the noise level `|y - y_true|`, when known.
#[derive(Debug, Clone)]
pub struct AdpProblem<T> {
    pub operator: LinearOp<T>,
    pub data: Signal<T>,
    pub penalty: Penalty<T>,
    pub alpha: T,
    pub beta: T,
    pub delta: Option<T>,
}

impl<T: Real> AdpProblem<T> {
    pub fn new(
        operator: LinearOp<T>,
        data: Signal<T>,
        penalty: Penalty<T>,
        alpha: T,
    ) -> Result<Self> {
        operator.check_codomain(&data, "problem data")?;
        if !(alpha > T::zero()) {
            return Err(invalid_param(
                "alpha",
                format!("must be positive, got {alpha}"),
            ));
        }
        Ok(Self {
            operator,
            data,
            penalty,
            alpha,
            beta: T::zero(),
            delta: None,
        })
    }

    pub fn with_beta(mut self, beta: T) -> Result<Self> {
        if !(beta >= T::zero()) {
            return Err(invalid_param("beta", format!("must be >= 0, got {beta}")));
        }
        self.beta = beta;
        Ok(self)
    }

    pub fn with_delta(mut self, delta: T) -> Result<Self> {
        if !(delta >= T::zero()) {
            return Err(AdpError::InvalidInput(format!(
                "noise level must be >= 0, got {delta}"
            )));
        }
        self.delta = Some(delta);
        Ok(self)
    }

    /// `|A x - y|^2 / 2`
    pub fn data_misfit(&self, x: &Signal<T>) -> T {
        let r = self.operator.apply(x).axpy(-T::one(), &self.data);
        T::half() * r.norm_sq()
    }

    pub fn residual_norm(&self, x: &Signal<T>) -> T {
        self.operator.apply(x).distance(&self.data)
    }
}
