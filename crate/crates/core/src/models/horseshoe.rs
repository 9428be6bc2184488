//! Single-observation horseshoe: `y | τ ~ N(0, τ)`, `τ | γ ~ InvGa(1/2, γ)`,
//! `γ ~ Ga(1/2, 1)`, with coordinates `x = (τ, γ)`.

use super::{check_support, finite, TargetModel};
use crate::error::Result;
use crate::specfun::{ln_exp_integral_e1, ln_gamma, LN_2PI};
use crate::support::Support;

/// `c₀ = -ln(2π)/2 - 2 ln Γ(1/2)`.
pub const HORSESHOE_C0: f64 = -2.063_668_419_054_072_6;
/// `c₁ = c₀ + ln(2πe)`.
pub const HORSESHOE_C1: f64 = HORSESHOE_C0 + LN_2PI + 1.0;

#[derive(Debug, Clone)]
pub struct Horseshoe {
    pub y: f64,
}

impl Horseshoe {
    pub fn new(y: f64) -> Result<Self> {
        Ok(Self { y: finite("y", y)? })
    }

    pub fn c0() -> f64 {
        -0.5 * LN_2PI - 2.0 * ln_gamma(0.5)
    }

    /// Exact `ln p(y)`.
    ///
    /// Integrating out `γ` and then `τ` leaves `c₀ + ln(eᵃ E₁(a))`, `a = y²/2`.
    pub fn log_evidence(&self) -> Result<f64> {
        let a = 0.5 * self.y * self.y;
        Ok(HORSESHOE_C0 + a + ln_exp_integral_e1(a)?)
    }
}

impl TargetModel for Horseshoe {
    fn dim(&self) -> usize {
        2
    }
    fn supports(&self) -> Vec<Support> {
        vec![Support::Positive; 2]
    }
    fn coordinate_names(&self) -> Vec<String> {
        vec!["tau".into(), "gamma".into()]
    }
    fn log_joint(&self, x: &[f64]) -> Result<f64> {
        check_support(&self.supports(), x)?;
        let (t, g) = (x[0], x[1]);
        Ok(HORSESHOE_C0 - 2.0 * t.ln() - self.y * self.y / (2.0 * t) - g / t - g)
    }
    fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_support(&self.supports(), x)?;
        let (t, g) = (x[0], x[1]);
        Ok(vec![
            -2.0 / t + self.y * self.y / (2.0 * t * t) + g / (t * t),
            -1.0 / t - 1.0,
        ])
    }
    fn log_normalizer(&self) -> Option<f64> {
        self.log_evidence().ok()
    }
}
