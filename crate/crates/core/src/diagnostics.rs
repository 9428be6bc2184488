//! Quadrature diagnostics comparing a fitted proposal with a known target.
//!
//! Every integral is taken in the latent Gaussian coordinates, where the
//! proposal's weight is a plain normal density and the integrand is smooth.

use crate::copula::VgcState;
use crate::error::{Result, VgcError};
use crate::models::{BivariateLogNormal, TargetModel};
use crate::quadrature::{integrate, integrate_plane, QuadOptions};
use crate::specfun::{norm_cdf, norm_ln_pdf, LN_2PI};

// below this latent weight a failed evaluation (h saturating at the edge
// of its range in double precision) contributes nothing measurable
const NEGLIGIBLE_WEIGHT: f64 = 1e-8;

pub fn default_options() -> QuadOptions {
    QuadOptions::with_tol(1e-9, 1e-7)
}

// latent half-width past which the standard normal weight underflows
const LATENT_EDGE: f64 = 38.0;
// largest latent mass a margin KL may drop where h is not representable
const MAX_DROPPED_MASS: f64 = 1e-5;

/// `KL(f_j ‖ p)` between margin `j` of `state` and a normalized 1-d log density.
///
/// Where `h` saturates to the edge of its support in double precision the
/// integrand cannot be evaluated; that latent tail is cut off, and the call
/// fails if it carries more than `1e-5` of the mass.
pub fn kl_margin_with<F>(state: &VgcState, j: usize, ln_target: F, opts: QuadOptions) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let mu = state.gauss().mu()[j];
    let sigma = state.gauss().sigma(j);
    let t = &state.transforms()[j];
    let value_at = |w: f64| -> Result<f64> {
        let p = t.eval(mu + sigma * w)?;
        let v = norm_ln_pdf(w) - sigma.ln() - p.ln_deriv - ln_target(p.x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(VgcError::Range { value: v })
        }
    };
    let ok = |w: f64| value_at(w).is_ok();
    if !ok(0.0) {
        return value_at(0.0);
    }
    let edge = |dir: f64| {
        if ok(dir * LATENT_EDGE) {
            return dir * LATENT_EDGE;
        }
        let (mut good, mut bad) = (0.0, dir * LATENT_EDGE);
        for _ in 0..60 {
            let mid = 0.5 * (good + bad);
            if ok(mid) {
                good = mid;
            } else {
                bad = mid;
            }
        }
        good
    };
    let (lo, hi) = (edge(-1.0), edge(1.0));
    let dropped = norm_cdf(lo) + norm_cdf(-hi);
    if dropped > MAX_DROPPED_MASS {
        return Err(VgcError::domain(
            "kl_margin_with",
            format!("margin {j} is not representable on latent mass {dropped:e}"),
        ));
    }
    let v = integrate(
        |w| {
            let weight = norm_ln_pdf(w).exp();
            if weight == 0.0 {
                return Ok(0.0);
            }
            match value_at(w) {
                Ok(v) => Ok(weight * v),
                Err(_) if weight < NEGLIGIBLE_WEIGHT => Ok(0.0),
                Err(e) => Err(e),
            }
        },
        lo,
        hi,
        opts,
    )?;
    Ok(v.value)
}

/// `KL(q ‖ p)` for a 1-d target with a known normalizer.
pub fn kl_1d_quadrature(state: &VgcState, j: usize, target: &dyn TargetModel) -> Result<f64> {
    if target.dim() != 1 {
        return Err(VgcError::Parameter(format!(
            "1-d KL needs a 1-d target, got dimension {}",
            target.dim()
        )));
    }
    let ln_z = target
        .log_normalizer()
        .ok_or_else(|| VgcError::Parameter("target has no exact normalizer".into()))?;
    kl_margin_with(state, j, |x| Ok(target.log_joint(&[x])? - ln_z), default_options())
}

/// 2-d integral of `φ(ε₁)φ(ε₂) g(ε)`.
fn gauss_plane<F>(g: F, opts: QuadOptions) -> Result<f64>
where
    F: Fn(f64, f64) -> Result<f64>,
{
    Ok(integrate_plane(
        |a, b| {
            let weight = (norm_ln_pdf(a) + norm_ln_pdf(b)).exp();
            if weight == 0.0 {
                return Ok(0.0);
            }
            match g(a, b) {
                Ok(v) if v.is_finite() => Ok(weight * v),
                Ok(_) | Err(_) if weight < NEGLIGIBLE_WEIGHT => Ok(0.0),
                Ok(v) => Err(VgcError::Range { value: v }),
                Err(e) => Err(e),
            }
        },
        opts,
        opts,
    )?
    .value)
}

/// `KL(q ‖ p)` over the whole joint, for a target with a known normalizer.
pub fn kl_total_2d(state: &VgcState, target: &dyn TargetModel, opts: QuadOptions) -> Result<f64> {
    let ln_z = target
        .log_normalizer()
        .ok_or_else(|| VgcError::Parameter("target has no exact normalizer".into()))?;
    let gauss = state.gauss();
    let log_det = gauss.factor().log_det();
    gauss_plane(
        |a, b| {
            let eps = [a, b];
            let z = gauss.sample(&eps);
            let mut x = [0.0; 2];
            let mut jac = 0.0;
            for j in 0..2 {
                let p = state.transforms()[j].eval(z[j])?;
                x[j] = p.x;
                jac += p.ln_deriv;
            }
            let ln_q = -LN_2PI - 0.5 * (a * a + b * b) - log_det - jac;
            Ok(ln_q - (target.log_joint(&x)? - ln_z))
        },
        opts,
    )
}

/// Gaussian copula log density `ln c(w | r)` at normal scores `w`.
fn ln_gauss_copula(w: [f64; 2], r: f64) -> f64 {
    let d = 1.0 - r * r;
    let quad = (w[0] * w[0] - 2.0 * r * w[0] * w[1] + w[1] * w[1]) / d - (w[0] * w[0] + w[1] * w[1]);
    -0.5 * d.ln() - 0.5 * quad
}

/// Output of [`kl_decomposition_check`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct KlDecomposition {
    pub total_kl: f64,
    pub copula_kl: f64,
    pub margin_kl_sum: f64,
    pub residual: f64,
}

/// Splits `KL(q ‖ p)` into copula and margin parts, each computed by its own
/// quadrature, and reports what the split fails to account for.
///
/// The copula part is integrated over normal scores rather than the unit
/// square: with `u_j = Φ(w_j)` the copula density of `q` becomes a bivariate
/// normal weight and the integral has no boundary singularities.
pub fn kl_decomposition_check(q: &VgcState, p: &BivariateLogNormal) -> Result<KlDecomposition> {
    if q.dim() != 2 {
        return Err(VgcError::Parameter(format!("decomposition needs a 2-d state, got {}", q.dim())));
    }
    let opts = default_options();
    let total_kl = kl_total_2d(q, p, opts)?;

    let mut margin_kl_sum = 0.0;
    for j in 0..2 {
        let (m, s) = (p.mu[j], p.sigma[j]);
        margin_kl_sum += kl_margin_with(
            q,
            j,
            |x| {
                let a = (x.ln() - m) / s;
                Ok(norm_ln_pdf(a) - s.ln() - x.ln())
            },
            opts,
        )?;
    }

    let r = q.correlation_of()[0][1];
    let r_c = (1.0 - r * r).sqrt();
    let gauss = q.gauss();
    let sig = [gauss.sigma(0), gauss.sigma(1)];
    let copula_kl = gauss_plane(
        |a, b| {
            // w ~ N(0, Υ_q) via its Cholesky factor
            let w = [a, r * a + r_c * b];
            let mut alpha = [0.0; 2];
            for j in 0..2 {
                let x = q.transforms()[j].forward(gauss.mu()[j] + sig[j] * w[j])?;
                alpha[j] = (x.ln() - p.mu[j]) / p.sigma[j];
            }
            Ok(ln_gauss_copula(w, r) - ln_gauss_copula(alpha, p.rho))
        },
        opts,
    )?;

    Ok(KlDecomposition {
        total_kl,
        copula_kl,
        margin_kl_sum,
        residual: total_kl - (copula_kl + margin_kl_sum),
    })
}

/// Relative squared error `(ρ̂ - ρ)² / ρ²`.
pub fn rmse_rho(rho_hat: f64, rho: f64) -> Result<f64> {
    if rho == 0.0 {
        return Err(VgcError::Parameter("relative error undefined for rho = 0".into()));
    }
    Ok((rho_hat - rho).powi(2) / (rho * rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GammaTarget, Normal};
    use crate::optimizer::state_from_parts;
    use crate::specfun::ReferenceCdf;
    use crate::transform::MarginalTransform;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kl_1d_examples() {
        let q = state_from_parts(vec![0.0], &[vec![1.0]], vec![MarginalTransform::Identity]).unwrap();
        assert_abs_diff_eq!(kl_1d_quadrature(&q, 0, &Normal::standard(1)).unwrap(), 0.0, epsilon = 1e-8);
        let p = Normal::univariate(1.0, 1.0).unwrap();
        assert_abs_diff_eq!(kl_1d_quadrature(&q, 0, &p).unwrap(), 0.5, epsilon = 1e-8);
    }

    #[test]
    fn kl_is_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let target = GammaTarget::new(5.0, 2.0).unwrap();
        for _ in 0..100 {
            let k = rng.random_range(1..8usize);
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let omega: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let omega = crate::optimizer::project_simplex(&omega);
            let t = MarginalTransform::bernstein(k, omega, ReferenceCdf::exponential(1.0).unwrap()).unwrap();
            let q = state_from_parts(
                vec![rng.random_range(-1.0..1.0)],
                &[vec![rng.random_range(0.2..1.5)]],
                vec![t],
            )
            .unwrap();
            let kl = kl_1d_quadrature(&q, 0, &target).unwrap();
            assert!(kl >= -1e-8, "{kl}");
        }
    }

    #[test]
    fn decomposition_examples() {
        let p = BivariateLogNormal::new(0.1, 0.1, 0.5, 0.5, 0.4).unwrap();
        // exact: LN margins and the true correlation
        let c21 = 0.5 * 0.4;
        let c22 = 0.5 * (1.0f64 - 0.16).sqrt();
        let q = state_from_parts(vec![0.1, 0.1], &[vec![0.5, 0.0], vec![c21, c22]], vec![MarginalTransform::Exponential; 2]).unwrap();
        let d = kl_decomposition_check(&q, &p).unwrap();
        for v in [d.total_kl, d.copula_kl, d.margin_kl_sum, d.residual] {
            assert!(v.abs() < 1e-5, "{d:?}");
        }
        // true margins, wrong correlation
        let q = state_from_parts(vec![0.1, 0.1], &[vec![0.5, 0.0], vec![0.0, 0.5]], vec![MarginalTransform::Exponential; 2]).unwrap();
        let d = kl_decomposition_check(&q, &p).unwrap();
        assert!(d.margin_kl_sum.abs() < 1e-6, "{d:?}");
        assert_abs_diff_eq!(d.copula_kl, d.total_kl, epsilon = 1e-4);
        // KL(N(0, I) ‖ N(0, R)) = (tr R⁻¹ - 2 + ln|R|)/2
        let det = 1.0f64 - 0.16;
        assert_abs_diff_eq!(d.total_kl, 0.5 * (2.0 / det - 2.0 + det.ln()), epsilon = 1e-6);
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse_rho(0.4, 0.4).unwrap(), 0.0);
        assert_abs_diff_eq!(rmse_rho(0.0, 0.4).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rmse_rho(0.3, 0.4).unwrap(), 0.0625, epsilon = 1e-15);
        assert!(rmse_rho(0.3, 0.0).is_err());
    }
}
