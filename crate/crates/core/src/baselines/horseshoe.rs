//! Horseshoe baselines over `x = (τ, γ)` for a single observation `y`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VgcError};
use crate::models::{HORSESHOE_C0, HORSESHOE_C1};
use crate::specfun::{digamma, ln_gamma};

/// Full conditionals `τ | γ ~ InvGa(1, y²/2 + γ)` and `γ | τ ~ Ga(1, 1/τ + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsConditionals {
    pub tau_shape: f64,
    pub tau_scale: f64,
    pub gamma_shape: f64,
    pub gamma_rate: f64,
}

pub fn gibbs_conditionals(y: f64, tau: f64, gamma: f64) -> GibbsConditionals {
    GibbsConditionals {
        tau_shape: 1.0,
        tau_scale: 0.5 * y * y + gamma,
        gamma_shape: 1.0,
        gamma_rate: 1.0 / tau + 1.0,
    }
}

/// Alternating draws from the full conditionals, starting at `τ = γ = 1`.
pub fn gibbs_horseshoe(y: f64, n_samples: usize, burn_in: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut tau, mut gamma) = (1.0, 1.0);
    let mut out = Vec::with_capacity(n_samples);
    for i in 0..burn_in + n_samples {
        let c = gibbs_conditionals(y, tau, gamma);
        // shape-1 inverse gamma and gamma are reciprocal / scaled exponentials
        let e: f64 = rng.sample(Exp1);
        tau = c.tau_scale / e;
        let c = gibbs_conditionals(y, tau, gamma);
        let e: f64 = rng.sample(Exp1);
        gamma = e / c.gamma_rate;
        if i >= burn_in {
            out.push([tau, gamma]);
        }
    }
    out
}

/// `q(τ) = IG(α₁, β₁)`, `q(γ) = Ga(α₂, β₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfvbHorseshoeState {
    pub alpha1: f64,
    pub beta1: f64,
    pub alpha2: f64,
    pub beta2: f64,
}

impl MfvbHorseshoeState {
    pub fn mean_ln_tau(&self) -> f64 {
        self.beta1.ln() - digamma(self.alpha1)
    }
    pub fn mean_inv_tau(&self) -> f64 {
        self.alpha1 / self.beta1
    }
    pub fn mean_gamma(&self) -> f64 {
        self.alpha2 / self.beta2
    }
}

pub fn mfvb_elbo(y: f64, s: &MfvbHorseshoeState) -> f64 {
    let (lt, it, g) = (s.mean_ln_tau(), s.mean_inv_tau(), s.mean_gamma());
    let expected = HORSESHOE_C0 - 2.0 * lt - y * y * it / 2.0 - g * it - g;
    let h1 = s.alpha1 + s.beta1.ln() + ln_gamma(s.alpha1) - (1.0 + s.alpha1) * digamma(s.alpha1);
    let h2 = s.alpha2 - s.beta2.ln() + ln_gamma(s.alpha2) + (1.0 - s.alpha2) * digamma(s.alpha2);
    expected + h1 + h2
}

/// Coordinate ascent on the moment equations from `⟨γ⟩ = 1`.
pub fn mfvb_horseshoe(y: f64, max_iters: usize, tol: f64) -> Result<(MfvbHorseshoeState, f64)> {
    let mut gamma = 1.0;
    for _ in 0..max_iters {
        let beta1 = 0.5 * y * y + gamma;
        let beta2 = 1.0 / beta1 + 1.0;
        let next = 1.0 / beta2;
        let done = (next - gamma).abs() < tol;
        gamma = next;
        if done {
            let beta1 = 0.5 * y * y + gamma;
            let s = MfvbHorseshoeState {
                alpha1: 1.0,
                beta1,
                alpha2: 1.0,
                beta2: 1.0 / beta1 + 1.0,
            };
            return Ok((s, mfvb_elbo(y, &s)));
        }
    }
    Err(VgcError::Convergence(format!(
        "MFVB fixed point not reached in {max_iters} iterations"
    )))
}

/// Log-normal margins with a bivariate Gaussian copula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VgcLnHorseshoeParams {
    pub mu1: f64,
    pub mu2: f64,
    pub c11: f64,
    pub c21: f64,
    pub c22: f64,
}

impl VgcLnHorseshoeParams {
    pub fn new(mu1: f64, mu2: f64, c11: f64, c21: f64, c22: f64) -> Result<Self> {
        if !(c11 > 0.0 && c22 > 0.0) {
            return Err(VgcError::Invariant(format!(
                "diagonal must be positive, got C11={c11}, C22={c22}"
            )));
        }
        Ok(Self { mu1, mu2, c11, c21, c22 })
    }

    fn to_array(self) -> [f64; 5] {
        [self.mu1, self.mu2, self.c11, self.c21, self.c22]
    }

    fn from_array(a: [f64; 5]) -> Self {
        Self {
            mu1: a[0],
            mu2: a[1],
            c11: a[2],
            c21: a[3],
            c22: a[4],
        }
    }
}

fn ln_terms(y: f64, p: &VgcLnHorseshoeParams) -> (f64, f64, f64) {
    let a = 0.5 * y * y * (0.5 * p.c11 * p.c11 - p.mu1).exp();
    let b = (p.mu2 + 0.5 * (p.c21 * p.c21 + p.c22 * p.c22)).exp();
    let l0 = ((p.mu2 - p.mu1)
        + 0.5 * (p.c11 * p.c11 - 2.0 * p.c11 * p.c21 + p.c21 * p.c21 + p.c22 * p.c22))
        .exp();
    (a, b, l0)
}

/// Closed-form ELBO of the log-normal copula proposal.
pub fn vgc_ln_elbo(y: f64, p: &VgcLnHorseshoeParams) -> f64 {
    let (a, b, l0) = ln_terms(y, p);
    HORSESHOE_C1 - p.mu1 + p.mu2 - a - l0 - b + (p.c11 * p.c22).ln()
}

/// Partial derivatives in the order `(μ₁, μ₂, C₁₁, C₂₁, C₂₂)`.
pub fn vgc_ln_gradient(y: f64, p: &VgcLnHorseshoeParams) -> [f64; 5] {
    let (a, b, l0) = ln_terms(y, p);
    [
        -1.0 + a + l0,
        1.0 - l0 - b,
        -p.c11 * a - (p.c11 - p.c21) * l0 + 1.0 / p.c11,
        (p.c11 - p.c21) * l0 - p.c21 * b,
        -p.c22 * l0 - p.c22 * b + 1.0 / p.c22,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VgcLnMode {
    Full,
    /// `C₂₁` pinned at zero.
    Diag,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VgcLnFit {
    pub params: VgcLnHorseshoeParams,
    pub elbo: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Gradient ascent with Armijo backtracking on the closed-form ELBO.
pub fn vgc_ln_deterministic(
    y: f64,
    mode: VgcLnMode,
    init: VgcLnHorseshoeParams,
    max_iters: usize,
) -> Result<VgcLnFit> {
    let mut x = init.to_array();
    if mode == VgcLnMode::Diag {
        x[3] = 0.0;
    }
    let mut f = vgc_ln_elbo(y, &VgcLnHorseshoeParams::from_array(x));
    if !f.is_finite() {
        return Err(VgcError::Invariant("initial ELBO is not finite".into()));
    }
    let mut step: f64 = 1.0;
    for it in 0..max_iters {
        let mut g = vgc_ln_gradient(y, &VgcLnHorseshoeParams::from_array(x));
        if mode == VgcLnMode::Diag {
            g[3] = 0.0;
        }
        let gnorm2: f64 = g.iter().map(|v| v * v).sum();
        if gnorm2.sqrt() < 1e-10 {
            return Ok(VgcLnFit {
                params: VgcLnHorseshoeParams::from_array(x),
                elbo: f,
                iterations: it,
                converged: true,
            });
        }
        step = (step * 2.0).min(1e3);
        let mut accepted = false;
        for _ in 0..200 {
            let mut cand = x;
            for (c, gi) in cand.iter_mut().zip(&g) {
                *c += step * gi;
            }
            if cand[2] > 0.0 && cand[4] > 0.0 {
                let fc = vgc_ln_elbo(y, &VgcLnHorseshoeParams::from_array(cand));
                if fc.is_finite() && fc >= f + 1e-4 * step * gnorm2 {
                    x = cand;
                    f = fc;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            // no ascent possible at machine precision: report where we stand
            if gnorm2.sqrt() < 1e-6 {
                return Ok(VgcLnFit {
                    params: VgcLnHorseshoeParams::from_array(x),
                    elbo: f,
                    iterations: it,
                    converged: true,
                });
            }
            return Err(VgcError::LineSearch { iteration: it });
        }
    }
    Ok(VgcLnFit {
        params: VgcLnHorseshoeParams::from_array(x),
        elbo: f,
        iterations: max_iters,
        converged: false,
    })
}
