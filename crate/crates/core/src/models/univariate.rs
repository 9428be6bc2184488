use super::{check_support, positive, TargetModel};
use crate::error::Result;
use crate::specfun::{ln_beta, ln_gamma, log_ndtr, norm_ln_pdf};
use crate::support::Support;

/// `ln p(x) ∝ ln φ(x) + ln Φ(αx)`.
#[derive(Debug, Clone)]
pub struct SkewNormal {
    pub alpha: f64,
}

impl SkewNormal {
    pub fn new(alpha: f64) -> Result<Self> {
        Ok(Self {
            alpha: super::finite("alpha", alpha)?,
        })
    }
}

impl TargetModel for SkewNormal {
    fn dim(&self) -> usize {
        1
    }
    fn supports(&self) -> Vec<Support> {
        vec![Support::Real]
    }
    fn log_joint(&self, x: &[f64]) -> Result<f64> {
        check_support(&self.supports(), x)?;
        Ok(norm_ln_pdf(x[0]) + log_ndtr(self.alpha * x[0]))
    }
    fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_support(&self.supports(), x)?;
        let ax = self.alpha * x[0];
        // αφ(αx)/Φ(αx) in log space so the far left tail stays finite
        let mills = (norm_ln_pdf(ax) - log_ndtr(ax)).exp();
        Ok(vec![-x[0] + self.alpha * mills])
    }
    fn log_normalizer(&self) -> Option<f64> {
        Some(-std::f64::consts::LN_2)
    }
}

/// `ln p(x) ∝ -(ν+1)/2 ln(1 + x²/ν)`.
#[derive(Debug, Clone)]
pub struct StudentT {
    pub nu: f64,
}

impl StudentT {
    pub fn new(nu: f64) -> Result<Self> {
        Ok(Self { nu: positive("nu", nu)? })
    }
}

impl TargetModel for StudentT {
    fn dim(&self) -> usize {
        1
    }
    fn supports(&self) -> Vec<Support> {
        vec![Support::Real]
    }
    fn log_joint(&self, x: &[f64]) -> Result<f64> {
        check_support(&self.supports(), x)?;
        Ok(-0.5 * (self.nu + 1.0) * (x[0] * x[0] / self.nu).ln_1p())
    }
    fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_support(&self.supports(), x)?;
        Ok(vec![-(self.nu + 1.0) * x[0] / (self.nu + x[0] * x[0])])
    }
    fn log_normalizer(&self) -> Option<f64> {
        let nu = self.nu;
        Some(ln_gamma(0.5 * nu) + 0.5 * (nu * std::f64::consts::PI).ln() - ln_gamma(0.5 * (nu + 1.0)))
    }
}

/// Shape/rate gamma: `ln p(x) ∝ (α-1) ln x - βx`.
#[derive(Debug, Clone)]
pub struct GammaTarget {
    pub shape: f64,
    pub rate: f64,
}

impl GammaTarget {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        Ok(Self {
            shape: positive("shape", shape)?,
            rate: positive("rate", rate)?,
        })
    }
}

impl TargetModel for GammaTarget {
    fn dim(&self) -> usize {
        1
    }
    fn supports(&self) -> Vec<Support> {
        vec![Support::Positive]
    }
    fn log_joint(&self, x: &[f64]) -> Result<f64> {
        check_support(&self.supports(), x)?;
        Ok((self.shape - 1.0) * x[0].ln() - self.rate * x[0])
    }
    fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_support(&self.supports(), x)?;
        Ok(vec![(self.shape - 1.0) / x[0] - self.rate])
    }
    fn log_normalizer(&self) -> Option<f64> {
        Some(ln_gamma(self.shape) - self.shape * self.rate.ln())
    }
}

/// `ln p(x) ∝ (a-1) ln x + (b-1) ln(1-x)`.
#[derive(Debug, Clone)]
pub struct BetaTarget {
    pub a: f64,
    pub b: f64,
}

impl BetaTarget {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        Ok(Self {
            a: positive("a", a)?,
            b: positive("b", b)?,
        })
    }
}

impl TargetModel for BetaTarget {
    fn dim(&self) -> usize {
        1
    }
    fn supports(&self) -> Vec<Support> {
        vec![Support::Unit]
    }
    fn log_joint(&self, x: &[f64]) -> Result<f64> {
        check_support(&self.supports(), x)?;
        Ok((self.a - 1.0) * x[0].ln() + (self.b - 1.0) * (-x[0]).ln_1p())
    }
    fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_support(&self.supports(), x)?;
        Ok(vec![(self.a - 1.0) / x[0] - (self.b - 1.0) / (1.0 - x[0])])
    }
    fn log_normalizer(&self) -> Option<f64> {
        Some(ln_beta(self.a, self.b))
    }
}
