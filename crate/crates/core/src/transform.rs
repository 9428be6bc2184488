//! Monotone per-coordinate maps from a latent Gaussian coordinate to a model
//! coordinate, with the derivatives the stochastic optimizer consumes.
//!
//! The Bernstein-polynomial (BP) map is `h(z) = Ψ⁻¹(B(Φ(z); k, ω))` where
//! `B(u; k, ω) = Σ_r ω_r I_u(r, k - r + 1)` is a mixture of beta CDFs with
//! simplex weights. All BP quantities are evaluated from the log Bernstein
//! basis `ln b_{j,n}(u) = ln C(n, j) + j ln u + (n - j) ln(1 - u)` using
//!
//! * `I_u(r, k - r + 1) = Σ_{j >= r} b_{j,k}(u)`,
//! * `β(u; r, k - r + 1) = k b_{r-1,k-1}(u)`,
//! * `b'(u) = k (k - 1) Σ_j (ω_{j+2} - ω_{j+1}) b_{j,k-2}(u)`,
//!
//! so that `B` and `1 - B` are both sums of nonnegative terms and neither
//! suffers cancellation in the tails.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VgcError};
use crate::specfun::{log_ndtr, norm_ln_pdf, ReferenceCdf, RefPoint};
use crate::support::Support;

/// Degree used wherever none is given.
pub const DEFAULT_DEGREE: usize = 10;

const SIMPLEX_TOL: f64 = 1e-12;
const BRACKET_LIMIT: f64 = 64.0;

fn ln_binomials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for j in 1..=n {
        acc += ((n - j + 1) as f64).ln() - (j as f64).ln();
        out.push(acc);
    }
    out
}

/// `ln b_{j,n}(u)` for `j = 0..=n`, exact at `u ∈ {0, 1}`.
fn log_basis(ln_binom: &[f64], ln_u: f64, ln_v: f64, out: &mut Vec<f64>) {
    let n = ln_binom.len() - 1;
    out.clear();
    for (j, &lb) in ln_binom.iter().enumerate() {
        let mut t = lb;
        if j > 0 {
            t += j as f64 * ln_u;
        }
        if n > j {
            t += (n - j) as f64 * ln_v;
        }
        out.push(t);
    }
}

fn lse(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    crate::specfun::log_sum_exp(terms)
}

pub(crate) fn validate_simplex(omega: &[f64]) -> Result<()> {
    if omega.is_empty() {
        return Err(VgcError::Invariant("weight vector is empty".into()));
    }
    if omega.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(VgcError::Invariant(format!(
            "weights must be finite and nonnegative: {omega:?}"
        )));
    }
    let sum: f64 = omega.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(VgcError::Invariant(format!("weights sum to {sum}, not 1")));
    }
    Ok(())
}

/// Bernstein-polynomial transform of degree `k` over a fixed reference CDF.
#[derive(Debug, Clone)]
pub struct BernsteinTransform {
    k: usize,
    omega: Vec<f64>,
    reference: ReferenceCdf,
    ln_binom_k: Vec<f64>,
    ln_binom_k1: Vec<f64>,
    ln_binom_k2: Vec<f64>,
    ln_omega: Vec<f64>,
    // ln Σ_{r <= j} ω_r and ln Σ_{r > j} ω_r for j = 0..=k
    ln_head: Vec<f64>,
    ln_tail: Vec<f64>,
    // ω_{j+2} - ω_{j+1} for j = 0..k-2
    omega_diff: Vec<f64>,
}

impl PartialEq for BernsteinTransform {
    fn eq(&self, other: &Self) -> bool {
        self.k == other.k && self.omega == other.omega && self.reference == other.reference
    }
}

/// Everything needed from one BP evaluation, kept for the weight gradients.
#[derive(Debug, Clone)]
pub struct BernsteinPoint {
    pub x: f64,
    pub ln_deriv: f64,
    pub dlog_deriv: f64,
    pub reference: RefPoint,
    ln_b: f64,
    basis_k: Vec<f64>,
    basis_k1: Vec<f64>,
}

impl BernsteinTransform {
    pub fn new(k: usize, omega: Vec<f64>, reference: ReferenceCdf) -> Result<Self> {
        if k == 0 {
            return Err(VgcError::Parameter("Bernstein degree must be positive".into()));
        }
        if omega.len() != k {
            return Err(VgcError::Invariant(format!(
                "degree {k} needs {k} weights, got {}",
                omega.len()
            )));
        }
        validate_simplex(&omega)?;
        let ln_binom_k = ln_binomials(k);
        let ln_binom_k1 = ln_binomials(k - 1);
        let ln_binom_k2 = if k >= 2 { ln_binomials(k - 2) } else { Vec::new() };
        let mut this = Self {
            k,
            omega: Vec::new(),
            reference,
            ln_binom_k,
            ln_binom_k1,
            ln_binom_k2,
            ln_omega: Vec::new(),
            ln_head: Vec::new(),
            ln_tail: Vec::new(),
            omega_diff: Vec::new(),
        };
        this.set_weights(omega);
        Ok(this)
    }

    /// Uniform weights; with a N(0,1) reference this is the identity map.
    pub fn uniform(k: usize, reference: ReferenceCdf) -> Result<Self> {
        Self::new(k, vec![1.0 / k as f64; k], reference)
    }

    fn set_weights(&mut self, omega: Vec<f64>) {
        let k = self.k;
        self.ln_omega = omega.iter().map(|w| w.ln()).collect();
        let mut head = vec![0.0; k + 1];
        for j in 1..=k {
            head[j] = head[j - 1] + omega[j - 1];
        }
        let mut tail = vec![0.0; k + 1];
        for j in (0..k).rev() {
            tail[j] = tail[j + 1] + omega[j];
        }
        self.ln_head = head.iter().map(|w| w.ln()).collect();
        self.ln_tail = tail.iter().map(|w| w.ln()).collect();
        self.omega_diff = (0..k.saturating_sub(1))
            .map(|j| omega[j + 1] - omega[j])
            .collect();
        self.omega = omega;
    }

    /// Same degree and reference with new weights.
    pub fn with_weights(&self, omega: Vec<f64>) -> Result<Self> {
        if omega.len() != self.k {
            return Err(VgcError::Invariant(format!(
                "degree {} needs {} weights, got {}",
                self.k,
                self.k,
                omega.len()
            )));
        }
        validate_simplex(&omega)?;
        let mut next = self.clone();
        next.set_weights(omega);
        Ok(next)
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn weights(&self) -> &[f64] {
        &self.omega
    }

    pub fn reference(&self) -> ReferenceCdf {
        self.reference
    }

    /// `ln B(u)` and `ln(1 - B(u))` from the log basis of degree `k`.
    fn log_mixture_tails(&self, basis_k: &[f64]) -> (f64, f64) {
        let ln_b = lse((1..=self.k).map(|j| basis_k[j] + self.ln_head[j]));
        let ln_s = lse((0..self.k).map(|j| basis_k[j] + self.ln_tail[j]));
        (ln_b, ln_s)
    }

    /// `ln b(u)` from the log basis of degree `k - 1`.
    fn log_mixture_density(&self, basis_k1: &[f64]) -> f64 {
        (self.k as f64).ln() + lse((0..self.k).map(|j| self.ln_omega[j] + basis_k1[j]))
    }

    /// `b'(u) / b(u)`.
    fn density_log_slope(&self, ln_u: f64, ln_v: f64, ln_b: f64) -> f64 {
        if self.k < 2 {
            return 0.0;
        }
        let mut basis = Vec::with_capacity(self.k - 1);
        log_basis(&self.ln_binom_k2, ln_u, ln_v, &mut basis);
        let scale = ((self.k * (self.k - 1)) as f64).ln() - ln_b;
        basis
            .iter()
            .zip(&self.omega_diff)
            .filter(|(_, d)| **d != 0.0)
            .map(|(lb, d)| d * (lb + scale).exp())
            .sum()
    }

    /// `B(u; k, ω)`.
    pub fn cdf(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(VgcError::domain("bp_cdf", format!("argument {u} outside [0, 1]")));
        }
        let mut basis = Vec::new();
        log_basis(&self.ln_binom_k, u.ln(), (-u).ln_1p(), &mut basis);
        let (ln_b, ln_s) = self.log_mixture_tails(&basis);
        // pick the better-conditioned tail
        Ok(if ln_b <= ln_s { ln_b.exp() } else { -ln_s.exp_m1() })
    }

    /// `b(u; k, ω) = Σ_r ω_r β(u; r, k - r + 1)`.
    pub fn pdf(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(VgcError::domain("bp_pdf", format!("argument {u} outside [0, 1]")));
        }
        let mut basis = Vec::new();
        log_basis(&self.ln_binom_k1, u.ln(), (-u).ln_1p(), &mut basis);
        Ok(self.log_mixture_density(&basis).exp())
    }

    /// Full evaluation at latent coordinate `z`.
    pub fn eval(&self, z: f64) -> Result<BernsteinPoint> {
        let ln_u = log_ndtr(z);
        let ln_v = log_ndtr(-z);
        let mut basis_k = Vec::with_capacity(self.k + 1);
        log_basis(&self.ln_binom_k, ln_u, ln_v, &mut basis_k);
        let (ln_cdf, ln_surv) = self.log_mixture_tails(&basis_k);
        let reference = self.reference.quantile_tails(ln_cdf, ln_surv);

        let mut basis_k1 = Vec::with_capacity(self.k);
        log_basis(&self.ln_binom_k1, ln_u, ln_v, &mut basis_k1);
        let ln_b = self.log_mixture_density(&basis_k1);

        // ln h' = ln b(u) + ln φ(z) - ln ψ(h)
        let ln_deriv = ln_b + norm_ln_pdf(z) - reference.ln_pdf;
        if !ln_deriv.is_finite() || !reference.x.is_finite() {
            return Err(VgcError::DerivativeOverflow { z });
        }
        let deriv = ln_deriv.exp();
        if deriv.is_infinite() {
            return Err(VgcError::DerivativeOverflow { z });
        }
        // h''/h' = ρ1'/ρ1 + ρ2'/ρ2 - ρ3'/ρ3 with ρ1 = b(u), ρ2 = φ(z), ρ3 = ψ(h)
        let slope = self.density_log_slope(ln_u, ln_v, ln_b);
        let dlog_deriv = norm_ln_pdf(z).exp() * slope - z - reference.dlog_pdf * deriv;
        if !dlog_deriv.is_finite() {
            return Err(VgcError::DerivativeOverflow { z });
        }
        Ok(BernsteinPoint {
            x: reference.x,
            ln_deriv,
            dlog_deriv,
            reference,
            ln_b,
            basis_k,
            basis_k1,
        })
    }

    /// `(∂h/∂ω_r, ∂ln h'/∂ω_r)` for `r = 1..=k` at an evaluated point.
    pub fn weight_gradients(&self, point: &BernsteinPoint) -> Result<(Vec<f64>, Vec<f64>)> {
        let k = self.k;
        let mut ln_inc = vec![f64::NEG_INFINITY; k + 1];
        // suffix sums: ln I_u(r, k - r + 1) = ln Σ_{j >= r} b_{j,k}(u)
        let mut acc = f64::NEG_INFINITY;
        for j in (1..=k).rev() {
            acc = lse([acc, point.basis_k[j]].into_iter());
            ln_inc[j] = acc;
        }
        let ln_psi = point.reference.ln_pdf;
        let ln_k = (k as f64).ln();
        let mut dh = Vec::with_capacity(k);
        let mut dlog = Vec::with_capacity(k);
        for r in 1..=k {
            let dh_r = (ln_inc[r] - ln_psi).exp();
            let beta_ratio = (ln_k + point.basis_k1[r - 1] - point.ln_b).exp();
            let dlog_r = beta_ratio - point.reference.dlog_pdf * dh_r;
            if !dh_r.is_finite() || !dlog_r.is_finite() {
                return Err(VgcError::DerivativeOverflow { z: point.x });
            }
            dh.push(dh_r);
            dlog.push(dlog_r);
        }
        Ok((dh, dlog))
    }
}

/// Value and first two derivatives of a transform at one latent point.
#[derive(Debug, Clone, Copy)]
pub struct TransformPoint {
    pub x: f64,
    pub deriv: f64,
    pub ln_deriv: f64,
    /// `h''(z) / h'(z)`, the gradient of `ln h'`.
    pub dlog_deriv: f64,
}

/// The per-coordinate map `h_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TransformJson", try_from = "TransformJson")]
pub enum MarginalTransform {
    Bernstein(BernsteinTransform),
    /// `x = exp(z)`: log-normal margins.
    Exponential,
    /// `x = z`: Gaussian margins.
    Identity,
}

impl MarginalTransform {
    /// BP transform with uniform weights and the default reference for `support`.
    pub fn bernstein_default(support: Support, k: usize) -> Result<Self> {
        Ok(MarginalTransform::Bernstein(BernsteinTransform::uniform(
            k,
            ReferenceCdf::default_for(support),
        )?))
    }

    pub fn bernstein(k: usize, omega: Vec<f64>, reference: ReferenceCdf) -> Result<Self> {
        Ok(MarginalTransform::Bernstein(BernsteinTransform::new(k, omega, reference)?))
    }

    /// Range of the map.
    pub fn support(&self) -> Support {
        match self {
            MarginalTransform::Bernstein(bp) => bp.reference.support(),
            MarginalTransform::Exponential => Support::Positive,
            MarginalTransform::Identity => Support::Real,
        }
    }

    pub fn as_bernstein(&self) -> Option<&BernsteinTransform> {
        match self {
            MarginalTransform::Bernstein(bp) => Some(bp),
            _ => None,
        }
    }

    pub fn eval(&self, z: f64) -> Result<TransformPoint> {
        match self {
            MarginalTransform::Bernstein(bp) => {
                let p = bp.eval(z)?;
                Ok(TransformPoint {
                    x: p.x,
                    deriv: p.ln_deriv.exp(),
                    ln_deriv: p.ln_deriv,
                    dlog_deriv: p.dlog_deriv,
                })
            }
            MarginalTransform::Exponential => {
                let e = z.exp();
                Ok(TransformPoint {
                    x: e,
                    deriv: e,
                    ln_deriv: z,
                    dlog_deriv: 1.0,
                })
            }
            MarginalTransform::Identity => Ok(TransformPoint {
                x: z,
                deriv: 1.0,
                ln_deriv: 0.0,
                dlog_deriv: 0.0,
            }),
        }
    }

    pub fn forward(&self, z: f64) -> Result<f64> {
        match self {
            MarginalTransform::Bernstein(bp) => Ok(bp.eval(z)?.x),
            MarginalTransform::Exponential => Ok(z.exp()),
            MarginalTransform::Identity => Ok(z),
        }
    }

    pub fn deriv(&self, z: f64) -> Result<f64> {
        Ok(self.eval(z)?.deriv)
    }

    /// `h''(z)`, the quotient-rule expression `h' · (h''/h')`.
    pub fn second_deriv(&self, z: f64) -> Result<f64> {
        let p = self.eval(z)?;
        Ok(p.deriv * p.dlog_deriv)
    }

    pub fn log_deriv_grad_z(&self, z: f64) -> Result<f64> {
        Ok(self.eval(z)?.dlog_deriv)
    }

    pub fn grad_weights(&self, z: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            MarginalTransform::Bernstein(bp) => bp.weight_gradients(&bp.eval(z)?),
            _ => Err(VgcError::Variant("grad_weights")),
        }
    }

    /// `h⁻¹(x)` by bracketed bisection with a Newton polish.
    pub fn inverse(&self, x: f64) -> Result<f64> {
        if !self.support().contains(x) {
            return Err(VgcError::Range { value: x });
        }
        match self {
            MarginalTransform::Exponential => Ok(x.ln()),
            MarginalTransform::Identity => Ok(x),
            MarginalTransform::Bernstein(bp) => invert_monotone(bp, x),
        }
    }
}

fn invert_monotone(bp: &BernsteinTransform, x: f64) -> Result<f64> {
    let h = |z: f64| bp.eval(z).map(|p| p.x);
    let mut lo = -1.0;
    while h(lo)? > x {
        lo *= 2.0;
        if lo < -BRACKET_LIMIT {
            return Err(VgcError::Range { value: x });
        }
    }
    let mut hi = 1.0;
    while h(hi)? < x {
        hi *= 2.0;
        if hi > BRACKET_LIMIT {
            return Err(VgcError::Range { value: x });
        }
    }
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid)? < x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut z = 0.5 * (lo + hi);
    for _ in 0..2 {
        let p = bp.eval(z)?;
        let step = (p.x - x) / p.ln_deriv.exp();
        let next = z - step;
        if next.is_finite() && next >= lo && next <= hi {
            z = next;
        }
    }
    Ok(z)
}

/// `B(u; k, ω)`.
pub fn bp_cdf(u: f64, k: usize, omega: &[f64]) -> Result<f64> {
    BernsteinTransform::new(k, omega.to_vec(), ReferenceCdf::StdNormal)?.cdf(u)
}

/// `b(u; k, ω)`.
pub fn bp_pdf(u: f64, k: usize, omega: &[f64]) -> Result<f64> {
    BernsteinTransform::new(k, omega.to_vec(), ReferenceCdf::StdNormal)?.pdf(u)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformJson {
    pub variant: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub omega: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_family: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_rate: Option<f64>,
}

impl From<MarginalTransform> for TransformJson {
    fn from(t: MarginalTransform) -> Self {
        match t {
            MarginalTransform::Bernstein(bp) => {
                let (family, rate) = match bp.reference {
                    ReferenceCdf::StdNormal => ("std_normal", None),
                    ReferenceCdf::Exponential { rate } => ("exponential", Some(rate)),
                    ReferenceCdf::Beta22 => ("beta22", None),
                };
                TransformJson {
                    variant: "bernstein".into(),
                    k: Some(bp.k),
                    omega: bp.omega,
                    ref_family: Some(family.into()),
                    ref_rate: rate,
                }
            }
            MarginalTransform::Exponential => TransformJson {
                variant: "exponential".into(),
                k: None,
                omega: Vec::new(),
                ref_family: None,
                ref_rate: None,
            },
            MarginalTransform::Identity => TransformJson {
                variant: "identity".into(),
                k: None,
                omega: Vec::new(),
                ref_family: None,
                ref_rate: None,
            },
        }
    }
}

impl TryFrom<TransformJson> for MarginalTransform {
    type Error = VgcError;

    fn try_from(j: TransformJson) -> Result<Self> {
        match j.variant.as_str() {
            "identity" => Ok(MarginalTransform::Identity),
            "exponential" => Ok(MarginalTransform::Exponential),
            "bernstein" => {
                let reference = match j.ref_family.as_deref() {
                    Some("std_normal") => ReferenceCdf::StdNormal,
                    Some("exponential") => ReferenceCdf::exponential(j.ref_rate.unwrap_or(1.0))?,
                    Some("beta22") => ReferenceCdf::Beta22,
                    other => {
                        return Err(VgcError::Config(format!("unknown reference family {other:?}")))
                    }
                };
                let k = j.k.unwrap_or(j.omega.len());
                MarginalTransform::bernstein(k, j.omega, reference)
            }
            other => Err(VgcError::Config(format!("unknown transform variant `{other}`"))),
        }
    }
}
