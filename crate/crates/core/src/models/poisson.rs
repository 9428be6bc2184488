//! Poisson log-linear regression with a quadratic covariate effect:
//! `y_i ~ Poisson(exp(β₀ + β₁u_i + β₂u_i²))`, `β_k ~ N(0, τ)`, `τ ~ Ga(a₀, b₀)`.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{check_support, finite, positive, TargetModel};
use crate::error::{Result, VgcError};
use crate::specfun::{ln_gamma, LN_2PI};
use crate::support::Support;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Record {
    y: u64,
    u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonRegressionData {
    pub y: Vec<u64>,
    pub u: Vec<f64>,
}

impl PoissonRegressionData {
    pub fn new(y: Vec<u64>, u: Vec<f64>) -> Result<Self> {
        if y.is_empty() {
            return Err(VgcError::Invariant("regression data needs at least one record".into()));
        }
        if y.len() != u.len() {
            return Err(VgcError::Invariant(format!(
                "{} counts but {} covariates",
                y.len(),
                u.len()
            )));
        }
        if let Some(bad) = u.iter().find(|v| !v.is_finite()) {
            return Err(VgcError::Invariant(format!("non-finite covariate {bad}")));
        }
        Ok(Self { y, u })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Reads a `y,u` CSV.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let mut y = Vec::new();
        let mut u = Vec::new();
        for rec in reader.deserialize() {
            let r: Record = rec?;
            y.push(r.y);
            u.push(r.u);
        }
        Self::new(y, u)
    }

    pub fn to_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for (y, u) in self.y.iter().zip(&self.u) {
            w.serialize(Record { y: *y, u: *u })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Covariates shifted to mean 0 and scaled to unit variance.
    pub fn standardized(&self) -> Self {
        let n = self.u.len() as f64;
        let mean = self.u.iter().sum::<f64>() / n;
        let var = self.u.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        Self {
            y: self.y.clone(),
            u: self.u.iter().map(|v| (v - mean) / sd).collect(),
        }
    }
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Draws counts from the model at fixed coefficients on a covariate grid.
pub fn generate_poisson_data(beta: [f64; 3], grid: &[f64], seed: u64) -> Result<PoissonRegressionData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = Vec::with_capacity(grid.len());
    for &u in grid {
        let rate = (beta[0] + beta[1] * u + beta[2] * u * u).exp();
        let dist = Poisson::new(rate)
            .map_err(|e| VgcError::Parameter(format!("Poisson rate {rate}: {e}")))?;
        let draw: f64 = dist.sample(&mut rng);
        y.push(draw as u64);
    }
    PoissonRegressionData::new(y, grid.to_vec())
}

/// Target over `x = (β₀, β₁, β₂, τ)`.
#[derive(Debug, Clone)]
pub struct PoissonLogLinear {
    data: PoissonRegressionData,
    a0: f64,
    b0: f64,
    // Σy, Σyu, Σyu², Σ ln y!
    sum_y: [f64; 3],
    ln_fact: f64,
}

impl PoissonLogLinear {
    /// Uses the covariates as given; see [`PoissonRegressionData::standardized`].
    pub fn new(data: PoissonRegressionData, a0: f64, b0: f64) -> Result<Self> {
        let mut sum_y = [0.0; 3];
        let mut ln_fact = 0.0;
        for (y, u) in data.y.iter().zip(&data.u) {
            let y = *y as f64;
            sum_y[0] += y;
            sum_y[1] += y * u;
            sum_y[2] += y * u * u;
            ln_fact += ln_gamma(y + 1.0);
        }
        Ok(Self {
            data,
            a0: positive("a0", a0)?,
            b0: positive("b0", b0)?,
            sum_y,
            ln_fact,
        })
    }

    pub fn with_default_prior(data: PoissonRegressionData) -> Result<Self> {
        Self::new(data, 1.0, 1.0)
    }

    pub fn data(&self) -> &PoissonRegressionData {
        &self.data
    }

    // Σ μ_i, Σ u_i μ_i, Σ u_i² μ_i
    fn rate_sums(&self, beta: &[f64]) -> [f64; 3] {
        let mut s = [0.0; 3];
        for &u in &self.data.u {
            let mu = (beta[0] + beta[1] * u + beta[2] * u * u).exp();
            s[0] += mu;
            s[1] += u * mu;
            s[2] += u * u * mu;
        }
        s
    }
}

impl TargetModel for PoissonLogLinear {
    fn dim(&self) -> usize {
        4
    }
    fn supports(&self) -> Vec<Support> {
        vec![Support::Real, Support::Real, Support::Real, Support::Positive]
    }
    fn coordinate_names(&self) -> Vec<String> {
        ["beta0", "beta1", "beta2", "tau"].map(String::from).to_vec()
    }
    fn log_joint(&self, x: &[f64]) -> Result<f64> {
        check_support(&self.supports(), x)?;
        let (beta, tau) = (&x[..3], x[3]);
        let lin: f64 = beta.iter().zip(&self.sum_y).map(|(b, s)| b * s).sum();
        let lik = lin - self.rate_sums(beta)[0] - self.ln_fact;
        let sq: f64 = beta.iter().map(|b| b * b).sum();
        let prior_beta = -1.5 * (LN_2PI + tau.ln()) - sq / (2.0 * tau);
        let prior_tau = self.a0 * self.b0.ln() - ln_gamma(self.a0) + (self.a0 - 1.0) * tau.ln() - self.b0 * tau;
        let v = lik + prior_beta + prior_tau;
        finite("log joint", v)
    }
    fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_support(&self.supports(), x)?;
        let (beta, tau) = (&x[..3], x[3]);
        let rates = self.rate_sums(beta);
        let mut g: Vec<f64> = (0..3)
            .map(|k| self.sum_y[k] - rates[k] - beta[k] / tau)
            .collect();
        let sq: f64 = beta.iter().map(|b| b * b).sum();
        g.push(-1.5 / tau + sq / (2.0 * tau * tau) + (self.a0 - 1.0) / tau - self.b0);
        Ok(g)
    }
}
