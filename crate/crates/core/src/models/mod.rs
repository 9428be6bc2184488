//! Target densities `p(y, x)` known up to a constant, with analytic gradients.

mod horseshoe;
mod normal;
mod poisson;
mod univariate;

pub use horseshoe::{Horseshoe, HORSESHOE_C0, HORSESHOE_C1};
pub use normal::{BivariateLogNormal, Normal};
pub use poisson::{generate_poisson_data, linspace, PoissonLogLinear, PoissonRegressionData};
pub use univariate::{BetaTarget, GammaTarget, SkewNormal, StudentT};

use crate::error::{Result, VgcError};
use crate::support::Support;

/// An unnormalized log joint over `x` with its gradient.
pub trait TargetModel: Send + Sync {
    fn dim(&self) -> usize;

    fn supports(&self) -> Vec<Support>;

    fn coordinate_names(&self) -> Vec<String> {
        (0..self.dim()).map(|j| format!("x{}", j + 1)).collect()
    }

    fn log_joint(&self, x: &[f64]) -> Result<f64>;

    fn grad(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// `ln ∫ exp(log_joint)`, when known in closed form.
    fn log_normalizer(&self) -> Option<f64> {
        None
    }

    fn check_support(&self, x: &[f64]) -> Result<()> {
        check_support(&self.supports(), x)
    }
}

pub(crate) fn check_support(supports: &[Support], x: &[f64]) -> Result<()> {
    if supports.len() != x.len() {
        return Err(VgcError::Invariant(format!(
            "expected {} coordinates, got {}",
            supports.len(),
            x.len()
        )));
    }
    for (j, (s, v)) in supports.iter().zip(x).enumerate() {
        if !s.contains(*v) {
            return Err(VgcError::Support {
                coordinate: j,
                value: *v,
            });
        }
    }
    Ok(())
}

pub(crate) fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(VgcError::Parameter(format!("{name} must be positive, got {v}")))
    }
}

pub(crate) fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(VgcError::Parameter(format!("{name} must be finite, got {v}")))
    }
}
