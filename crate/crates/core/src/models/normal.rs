use super::{check_support, finite, positive, TargetModel};
use crate::copula::{GaussianFactor, LowerTriangular};
use crate::error::{Result, VgcError};
use crate::specfun::LN_2PI;
use crate::support::Support;

/// Normalized multivariate normal `N(m, LLᵀ)`.
#[derive(Debug, Clone)]
pub struct Normal {
    gauss: GaussianFactor,
}

impl Normal {
    pub fn new(mean: Vec<f64>, chol: LowerTriangular) -> Result<Self> {
        Ok(Self {
            gauss: GaussianFactor::new(mean, chol)?,
        })
    }

    pub fn standard(p: usize) -> Self {
        Self::new(vec![0.0; p], LowerTriangular::identity(p)).expect("identity factor is valid")
    }

    pub fn univariate(mean: f64, sd: f64) -> Result<Self> {
        Self::new(vec![mean], LowerTriangular::diagonal(&[positive("sd", sd)?]))
    }

    pub fn mean(&self) -> &[f64] {
        self.gauss.mu()
    }

    pub fn chol(&self) -> &LowerTriangular {
        self.gauss.factor()
    }
}

impl TargetModel for Normal {
    fn dim(&self) -> usize {
        self.gauss.dim()
    }
    fn supports(&self) -> Vec<Support> {
        vec![Support::Real; self.dim()]
    }
    fn log_joint(&self, x: &[f64]) -> Result<f64> {
        check_support(&self.supports(), x)?;
        Ok(self.gauss.log_density(x))
    }
    fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_support(&self.supports(), x)?;
        self.gauss.score(x)
    }
    fn log_normalizer(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Log-normal margins `LN(μ_i, σ_i²)` joined by a Gaussian copula with
/// correlation `ρ`: `ln p ∝ -ln x₁ - ln x₂ - ζ/2` with
/// `ζ = (α₁² - 2ρα₁α₂ + α₂²)/(1 - ρ²)` and `α_i = (ln x_i - μ_i)/σ_i`.
#[derive(Debug, Clone)]
pub struct BivariateLogNormal {
    pub mu: [f64; 2],
    pub sigma: [f64; 2],
    pub rho: f64,
}

impl BivariateLogNormal {
    pub fn new(mu1: f64, mu2: f64, sigma1: f64, sigma2: f64, rho: f64) -> Result<Self> {
        if !(rho > -1.0 && rho < 1.0) {
            return Err(VgcError::Parameter(format!("rho must lie in (-1, 1), got {rho}")));
        }
        Ok(Self {
            mu: [finite("mu1", mu1)?, finite("mu2", mu2)?],
            sigma: [positive("sigma1", sigma1)?, positive("sigma2", sigma2)?],
            rho,
        })
    }

    pub fn alpha(&self, x: &[f64]) -> [f64; 2] {
        [
            (x[0].ln() - self.mu[0]) / self.sigma[0],
            (x[1].ln() - self.mu[1]) / self.sigma[1],
        ]
    }
}

impl TargetModel for BivariateLogNormal {
    fn dim(&self) -> usize {
        2
    }
    fn supports(&self) -> Vec<Support> {
        vec![Support::Positive; 2]
    }
    fn log_joint(&self, x: &[f64]) -> Result<f64> {
        check_support(&self.supports(), x)?;
        let [a1, a2] = self.alpha(x);
        let zeta = (a1 * a1 - 2.0 * self.rho * a1 * a2 + a2 * a2) / (1.0 - self.rho * self.rho);
        Ok(-x[0].ln() - x[1].ln() - 0.5 * zeta)
    }
    fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_support(&self.supports(), x)?;
        let [a1, a2] = self.alpha(x);
        let d = 1.0 - self.rho * self.rho;
        Ok(vec![
            -1.0 / x[0] - (a1 - self.rho * a2) / (d * x[0] * self.sigma[0]),
            -1.0 / x[1] - (a2 - self.rho * a1) / (d * x[1] * self.sigma[1]),
        ])
    }
    fn log_normalizer(&self) -> Option<f64> {
        Some(LN_2PI + self.sigma[0].ln() + self.sigma[1].ln() + 0.5 * (1.0 - self.rho * self.rho).ln())
    }
}
