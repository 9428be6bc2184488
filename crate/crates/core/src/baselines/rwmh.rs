//! Random-walk Metropolis in unconstrained coordinates.
//!
//! Positive coordinates are sampled on the log scale and unit-interval
//! coordinates on the logit scale; the Jacobian enters the target.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::copula::LowerTriangular;
use crate::error::{Result, VgcError};
use crate::models::TargetModel;
use crate::support::Support;

pub fn to_constrained(supports: &[Support], y: &[f64]) -> Vec<f64> {
    supports
        .iter()
        .zip(y)
        .map(|(s, &v)| match s {
            Support::Real => v,
            Support::Positive => v.exp(),
            Support::Unit => 1.0 / (1.0 + (-v).exp()),
        })
        .collect()
}

pub fn to_unconstrained(supports: &[Support], x: &[f64]) -> Vec<f64> {
    supports
        .iter()
        .zip(x)
        .map(|(s, &v)| match s {
            Support::Real => v,
            Support::Positive => v.ln(),
            Support::Unit => v.ln() - (-v).ln_1p(),
        })
        .collect()
}

/// `ln p(x(y)) + ln |dx/dy|`.
pub fn unconstrained_log_density(model: &dyn TargetModel, y: &[f64]) -> Result<f64> {
    let supports = model.supports();
    let x = to_constrained(&supports, y);
    let mut jac = 0.0;
    for (s, &xi) in supports.iter().zip(&x) {
        jac += match s {
            Support::Real => 0.0,
            Support::Positive => xi.ln(),
            Support::Unit => xi.ln() + (-xi).ln_1p(),
        };
    }
    Ok(model.log_joint(&x)? + jac)
}

fn unconstrained_grad(model: &dyn TargetModel, y: &[f64]) -> Result<Vec<f64>> {
    let supports = model.supports();
    let x = to_constrained(&supports, y);
    let g = model.grad(&x)?;
    Ok(supports
        .iter()
        .zip(x.iter().zip(&g))
        .map(|(s, (&xi, &gi))| match s {
            Support::Real => gi,
            Support::Positive => gi * xi + 1.0,
            Support::Unit => gi * xi * (1.0 - xi) + 1.0 - 2.0 * xi,
        })
        .collect())
}

/// Log acceptance ratio of a symmetric proposal from `from` to `to`, with
/// out-of-support or non-finite targets mapping to `-∞`.
pub fn log_acceptance_ratio(model: &dyn TargetModel, from: &[f64], to: &[f64]) -> f64 {
    let a = unconstrained_log_density(model, from);
    let b = unconstrained_log_density(model, to);
    match (a, b) {
        (Ok(a), Ok(b)) if b.is_finite() => (b - a).min(0.0),
        _ => f64::NEG_INFINITY,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RwmhConfig {
    pub n_samples: usize,
    pub burn_in_frac: f64,
    pub scale: f64,
    pub seed: u64,
    /// Start in constrained coordinates; the Laplace mode is used when absent
    /// and a proposal is fitted, the unconstrained origin otherwise.
    pub init: Option<Vec<f64>>,
    /// Shape the random walk with a Laplace approximation.
    pub laplace: bool,
}

impl Default for RwmhConfig {
    fn default() -> Self {
        Self {
            n_samples: 100_000,
            burn_in_frac: 0.1,
            scale: 0.5,
            seed: 0,
            init: None,
            laplace: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RwmhResult {
    /// Constrained draws kept after burn-in.
    pub samples: Vec<Vec<f64>>,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone)]
pub struct LaplaceFit {
    /// Mode in unconstrained coordinates.
    pub mode: Vec<f64>,
    /// Cholesky factor of the inverse negative Hessian at the mode.
    pub chol: LowerTriangular,
}

fn cholesky(a: &[Vec<f64>]) -> Result<LowerTriangular> {
    let n = a.len();
    let mut l = LowerTriangular::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if s <= 0.0 {
                    return Err(VgcError::Invariant("Hessian is not negative definite at the mode".into()));
                }
                l.set(i, i, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Ok(l)
}

fn invert_spd(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let l = cholesky(a)?;
    let mut inv = vec![vec![0.0; n]; n];
    for c in 0..n {
        let mut e = vec![0.0; n];
        e[c] = 1.0;
        let col = l.solve_transpose(&l.solve(&e));
        for r in 0..n {
            inv[r][c] = col[r];
        }
    }
    Ok(inv)
}

/// Mode by gradient ascent with backtracking, curvature by central
/// differences of the analytic gradient.
pub fn laplace_proposal(model: &dyn TargetModel, start: &[f64]) -> Result<LaplaceFit> {
    let supports = model.supports();
    let mut y = to_unconstrained(&supports, start);
    let mut f = unconstrained_log_density(model, &y)?;
    let mut step = 1e-3;
    for it in 0..100_000 {
        let g = unconstrained_grad(model, &y)?;
        let gn2: f64 = g.iter().map(|v| v * v).sum();
        if gn2.sqrt() < 1e-8 * (1.0 + f.abs()) {
            break;
        }
        step *= 2.0;
        let mut moved = false;
        for _ in 0..100 {
            let cand: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a + step * b).collect();
            if let Ok(fc) = unconstrained_log_density(model, &cand) {
                if fc.is_finite() && fc >= f + 1e-4 * step * gn2 {
                    y = cand;
                    f = fc;
                    moved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !moved {
            if it == 0 {
                return Err(VgcError::LineSearch { iteration: it });
            }
            break;
        }
    }
    let n = y.len();
    let mut neg_h = vec![vec![0.0; n]; n];
    for j in 0..n {
        let h = 1e-5 * (1.0 + y[j].abs());
        let mut yp = y.clone();
        yp[j] += h;
        let mut ym = y.clone();
        ym[j] -= h;
        let gp = unconstrained_grad(model, &yp)?;
        let gm = unconstrained_grad(model, &ym)?;
        for i in 0..n {
            neg_h[i][j] = -(gp[i] - gm[i]) / (2.0 * h);
        }
    }
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (neg_h[i][j] + neg_h[j][i]);
            neg_h[i][j] = m;
            neg_h[j][i] = m;
        }
    }
    let cov = invert_spd(&neg_h)?;
    Ok(LaplaceFit { mode: y, chol: cholesky(&cov)? })
}

pub fn rwmh_sample(model: &dyn TargetModel, config: &RwmhConfig) -> Result<RwmhResult> {
    if !(config.scale > 0.0) || !(0.0..1.0).contains(&config.burn_in_frac) {
        return Err(VgcError::Config(format!(
            "RWMH needs scale > 0 and burn-in fraction in [0, 1), got {} and {}",
            config.scale, config.burn_in_frac
        )));
    }
    let supports = model.supports();
    let d = model.dim();
    let (mut y, chol) = if config.laplace {
        let start = config.init.clone().unwrap_or_else(|| to_constrained(&supports, &vec![0.0; d]));
        let fit = laplace_proposal(model, &start)?;
        let y0 = match &config.init {
            Some(x) => to_unconstrained(&supports, x),
            None => fit.mode.clone(),
        };
        (y0, Some(fit.chol))
    } else {
        let y0 = match &config.init {
            Some(x) => to_unconstrained(&supports, x),
            None => vec![0.0; d],
        };
        (y0, None)
    };
    let mut cur = unconstrained_log_density(model, &y)?;
    if !cur.is_finite() {
        return Err(VgcError::Invariant("RWMH start has zero target density".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let burn = (config.burn_in_frac * config.n_samples as f64).round() as usize;
    let mut samples = Vec::with_capacity(config.n_samples - burn);
    let mut accepted = 0usize;
    for i in 0..config.n_samples {
        let e: Vec<f64> = (0..d).map(|_| config.scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let step = match &chol {
            Some(l) => l.mul_vec(&e),
            None => e,
        };
        let prop: Vec<f64> = y.iter().zip(&step).map(|(a, b)| a + b).collect();
        let u: f64 = rng.random();
        if let Ok(lp) = unconstrained_log_density(model, &prop) {
            if lp.is_finite() && u.ln() < lp - cur {
                y = prop;
                cur = lp;
                accepted += 1;
            }
        }
        if i >= burn {
            samples.push(to_constrained(&supports, &y));
        }
    }
    Ok(RwmhResult {
        samples,
        acceptance_rate: accepted as f64 / config.n_samples.max(1) as f64,
    })
}
