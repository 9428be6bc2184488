//! Stochastic gradient ascent on the ELBO over `(μ, C, ω)`.
//!
//! Each iteration draws `ε ~ N(0, I)`, pushes it through `z̃ = μ + Cε`, and
//! uses the pathwise gradient of `ℓ_s(z̃) = ln p(y, h(z̃)) + Σ_j ln h_j'(z̃_j)`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::{GaussianFactor, LowerTriangular, VgcState, DELTA_DIAG};
use crate::error::{Result, VgcError};
use crate::models::TargetModel;
use crate::transform::MarginalTransform;

/// Consecutive rejected draws tolerated before a step gives up.
pub const MAX_CONSECUTIVE_REJECTIONS: usize = 100;

// below this many samples the thread-pool handoff costs more than it saves
const PAR_THRESHOLD: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    Constant { value: f64 },
    /// `value / (1 + kappa t)`.
    Decaying { value: f64, kappa: f64 },
}

impl StepSchedule {
    pub fn decaying(value: f64) -> Self {
        StepSchedule::Decaying {
            value,
            kappa: 1.0 / 1000.0,
        }
    }

    pub fn at(&self, t: usize) -> f64 {
        match *self {
            StepSchedule::Constant { value } => value,
            StepSchedule::Decaying { value, kappa } => value / (1.0 + kappa * t as f64),
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let (value, kappa) = match *self {
            StepSchedule::Constant { value } => (value, 0.0),
            StepSchedule::Decaying { value, kappa } => (value, kappa),
        };
        if !(value.is_finite() && value >= 0.0 && kappa.is_finite() && kappa >= 0.0) {
            return Err(VgcError::Config(format!("step size {name} is invalid: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyScheme {
    /// Per-sample `∇ℓ_s - ∇ln q_G`.
    #[serde(alias = "entropy_stochastic")]
    Stochastic,
    /// Per-sample `∇ℓ_s` plus the exact entropy gradient `diag(1/C_jj)`.
    #[serde(alias = "entropy_analytic")]
    Analytic,
}

impl std::str::FromStr for EntropyScheme {
    type Err = VgcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "stochastic" | "entropy_stochastic" | "entropystochastic" => Ok(EntropyScheme::Stochastic),
            "analytic" | "entropy_analytic" | "entropyanalytic" => Ok(EntropyScheme::Analytic),
            other => Err(VgcError::Config(format!("unknown entropy scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub iterations: usize,
    pub samples_per_iter: usize,
    pub lambda: StepSchedule,
    pub eta: StepSchedule,
    pub xi: StepSchedule,
    pub scheme: EntropyScheme,
    pub seed: u64,
    /// Moving-average window in iterations; 0 disables early stopping.
    pub window: usize,
    pub tol: f64,
    pub trace_every: usize,
    pub trace_samples: usize,
    pub delta_diag: f64,
    /// Lower bound on every Bernstein weight after projection; 0 keeps the
    /// plain simplex. A positive floor bounds `∂ln h′/∂ω_r` by `1/floor`.
    pub omega_floor: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            samples_per_iter: 1,
            lambda: StepSchedule::decaying(0.01),
            eta: StepSchedule::decaying(0.01),
            xi: StepSchedule::decaying(0.1),
            scheme: EntropyScheme::Stochastic,
            seed: 0,
            window: 200,
            tol: 1e-4,
            trace_every: 50,
            trace_samples: 200,
            delta_diag: DELTA_DIAG,
            omega_floor: 0.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(VgcError::Config("iterations must be positive".into()));
        }
        if self.samples_per_iter == 0 {
            return Err(VgcError::Config("samples_per_iter must be positive".into()));
        }
        if self.trace_every == 0 || self.trace_samples == 0 {
            return Err(VgcError::Config("trace_every and trace_samples must be positive".into()));
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(VgcError::Config(format!("tol must be nonnegative, got {}", self.tol)));
        }
        if !(self.delta_diag.is_finite() && self.delta_diag >= DELTA_DIAG) {
            return Err(VgcError::Config(format!(
                "delta_diag must be at least {DELTA_DIAG}, got {}",
                self.delta_diag
            )));
        }
        if !(self.omega_floor.is_finite() && self.omega_floor >= 0.0) {
            return Err(VgcError::Config(format!(
                "omega_floor must be nonnegative, got {}",
                self.omega_floor
            )));
        }
        self.lambda.validate("lambda")?;
        self.eta.validate("eta")?;
        self.xi.validate("xi")
    }

    /// Freezes the Gaussian factor so only the transform weights move.
    pub fn weights_only(mut self) -> Self {
        self.lambda = StepSchedule::Constant { value: 0.0 };
        self.eta = StepSchedule::Constant { value: 0.0 };
        self
    }
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    // the projection is invariant to adding a constant to every entry;
    // centring on the maximum keeps the arithmetic well scaled
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let v: Vec<f64> = v.iter().map(|x| x - top).collect();
    let mut u = v.clone();
    u.sort_by(|a, b| b.total_cmp(a));
    // the largest entry always stays in the support
    let mut cumsum = u[0];
    let mut theta = u[0] - 1.0;
    for (j, uj) in u.iter().enumerate().skip(1) {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|vi| (vi - theta).max(0.0)).collect()
}

/// Per-coordinate transform evaluation, including weight gradients when
/// the transform is a BP map.
struct CoordEval {
    x: f64,
    deriv: f64,
    ln_deriv: f64,
    dlog_deriv: f64,
    weights: Option<(Vec<f64>, Vec<f64>)>,
}

fn eval_coord(t: &MarginalTransform, z: f64, want_weights: bool) -> Result<CoordEval> {
    match t {
        MarginalTransform::Bernstein(bp) => {
            let p = bp.eval(z)?;
            let weights = if want_weights {
                Some(bp.weight_gradients(&p)?)
            } else {
                None
            };
            Ok(CoordEval {
                x: p.x,
                deriv: p.ln_deriv.exp(),
                ln_deriv: p.ln_deriv,
                dlog_deriv: p.dlog_deriv,
                weights,
            })
        }
        other => {
            let p = other.eval(z)?;
            Ok(CoordEval {
                x: p.x,
                deriv: p.deriv,
                ln_deriv: p.ln_deriv,
                dlog_deriv: p.dlog_deriv,
                weights: None,
            })
        }
    }
}

fn eval_all(state: &VgcState, z: &[f64], want_weights: bool) -> Result<Vec<CoordEval>> {
    state
        .transforms()
        .iter()
        .zip(z)
        .map(|(t, zj)| {
            let e = eval_coord(t, *zj, want_weights)?;
            if !e.x.is_finite() {
                return Err(VgcError::Range { value: e.x });
            }
            Ok(e)
        })
        .collect()
}

/// `ℓ_s(z̃) = ln p(y, h(z̃)) + Σ_j ln h_j'(z̃_j)`.
pub fn local_objective(state: &VgcState, model: &dyn TargetModel, z: &[f64]) -> Result<f64> {
    let evals = eval_all(state, z, false)?;
    let x: Vec<f64> = evals.iter().map(|e| e.x).collect();
    Ok(model.log_joint(&x)? + evals.iter().map(|e| e.ln_deriv).sum::<f64>())
}

/// `∇_z̃ ℓ_s = ∂ln p/∂x_j · h_j' + h_j''/h_j'`.
pub fn grad_z_local(state: &VgcState, model: &dyn TargetModel, z: &[f64]) -> Result<Vec<f64>> {
    let evals = eval_all(state, z, false)?;
    let x: Vec<f64> = evals.iter().map(|e| e.x).collect();
    let gx = model.grad(&x)?;
    Ok(gx
        .iter()
        .zip(&evals)
        .map(|(g, e)| g * e.deriv + e.dlog_deriv)
        .collect())
}

/// One Monte Carlo gradient sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGradient {
    pub mu: Vec<f64>,
    /// Lower triangle of the `C` gradient, packed by rows.
    pub c: Vec<f64>,
    /// Weight gradients for BP coordinates.
    pub omega: Vec<Option<Vec<f64>>>,
}

/// Gradient of the ELBO integrand at `z̃ = μ + Cε`.
pub fn sample_gradient(
    state: &VgcState,
    model: &dyn TargetModel,
    eps: &[f64],
    scheme: EntropyScheme,
) -> Result<SampleGradient> {
    let gauss = state.gauss();
    let z = gauss.sample(eps);
    let evals = eval_all(state, &z, true)?;
    let x: Vec<f64> = evals.iter().map(|e| e.x).collect();
    let gx = model.grad(&x)?;
    let mut d: Vec<f64> = gx
        .iter()
        .zip(&evals)
        .map(|(g, e)| g * e.deriv + e.dlog_deriv)
        .collect();
    if scheme == EntropyScheme::Stochastic {
        // -∇ln q_G(z̃) = C⁻ᵀε
        for (di, s) in d.iter_mut().zip(gauss.score_at_eps(eps)) {
            *di -= s;
        }
    }
    let p = d.len();
    let factor = gauss.factor();
    let mut c = Vec::with_capacity(p * (p + 1) / 2);
    for i in 0..p {
        for j in 0..=i {
            let mut v = d[i] * eps[j];
            if i == j && scheme == EntropyScheme::Analytic {
                v += 1.0 / factor.get(i, i);
            }
            c.push(v);
        }
    }
    let omega = evals
        .iter()
        .zip(&gx)
        .map(|(e, g)| {
            e.weights.as_ref().map(|(dh, dlog)| {
                dh.iter().zip(dlog).map(|(a, b)| g * a + b).collect::<Vec<f64>>()
            })
        })
        .collect::<Vec<_>>();
    let finite = d.iter().chain(&c).all(|v| v.is_finite())
        && omega.iter().flatten().flatten().all(|v| v.is_finite());
    if !finite {
        return Err(VgcError::DerivativeOverflow { z: z[0] });
    }
    Ok(SampleGradient { mu: d, c, omega })
}

fn draw_eps<R: Rng>(rng: &mut R, p: usize) -> Vec<f64> {
    (0..p).map(|_| rng.sample(StandardNormal)).collect()
}

/// Evaluates `f` on draws from `rng`, redrawing rejected samples in index
/// order. Results come back in draw order regardless of threading.
fn evaluate_with_redraw<T, F, R>(rng: &mut R, p: usize, n: usize, f: F) -> Result<(Vec<T>, usize)>
where
    T: Send,
    F: Fn(&[f64]) -> Result<T> + Sync,
    R: Rng,
{
    let mut eps: Vec<Vec<f64>> = (0..n).map(|_| draw_eps(rng, p)).collect();
    let eval = |e: &Vec<f64>| f(e);
    let out: Vec<Result<T>> = if n >= PAR_THRESHOLD {
        eps.par_iter().map(eval).collect()
    } else {
        eps.iter().map(eval).collect()
    };
    let mut rejected = 0;
    let mut accepted = Vec::with_capacity(n);
    for (i, first) in out.into_iter().enumerate() {
        let mut current = first;
        let mut consecutive = 0;
        let value = loop {
            match current {
                Ok(v) => break v,
                Err(e) if e.is_sample_rejection() => {
                    consecutive += 1;
                    rejected += 1;
                    if consecutive >= MAX_CONSECUTIVE_REJECTIONS {
                        return Err(VgcError::TooManyRejections { consecutive });
                    }
                    log::debug!("rejected sample {i}: {e}");
                    eps[i] = draw_eps(rng, p);
                    current = f(&eps[i]);
                }
                Err(e) => return Err(e),
            }
        };
        accepted.push(value);
    }
    Ok((accepted, rejected))
}

/// Per-iteration bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub rejected: usize,
}

/// Euclidean projection onto `{ω : ω_r ≥ floor, Σω = 1}`, an affine image
/// of the simplex.
pub fn project_floored(v: &[f64], floor: f64) -> Result<Vec<f64>> {
    if floor == 0.0 {
        return Ok(project_simplex(v));
    }
    let room = 1.0 - floor * v.len() as f64;
    if room <= 0.0 {
        return Err(VgcError::Config(format!(
            "omega_floor {floor} leaves no room for {} weights",
            v.len()
        )));
    }
    let scaled: Vec<f64> = v.iter().map(|x| (x - floor) / room).collect();
    Ok(project_simplex(&scaled).into_iter().map(|w| floor + room * w).collect())
}

/// One iteration at (1-based) iteration number `t`.
pub fn step<R: Rng>(
    state: &VgcState,
    model: &dyn TargetModel,
    config: &OptimizerConfig,
    t: usize,
    rng: &mut R,
) -> Result<(VgcState, StepStats)> {
    let p = state.dim();
    let s = config.samples_per_iter;
    let (grads, rejected) = evaluate_with_redraw(rng, p, s, |eps| {
        sample_gradient(state, model, eps, config.scheme)
    })?;

    let inv = 1.0 / s as f64;
    let mut g_mu = vec![0.0; p];
    let mut g_c = vec![0.0; p * (p + 1) / 2];
    let mut g_omega: Vec<Option<Vec<f64>>> = grads[0].omega.iter().map(|o| o.as_ref().map(|v| vec![0.0; v.len()])).collect();
    for g in &grads {
        for (a, b) in g_mu.iter_mut().zip(&g.mu) {
            *a += b * inv;
        }
        for (a, b) in g_c.iter_mut().zip(&g.c) {
            *a += b * inv;
        }
        for (acc, gw) in g_omega.iter_mut().zip(&g.omega) {
            if let (Some(acc), Some(gw)) = (acc.as_mut(), gw.as_ref()) {
                for (a, b) in acc.iter_mut().zip(gw) {
                    *a += b * inv;
                }
            }
        }
    }

    let (lambda, eta, xi) = (config.lambda.at(t), config.eta.at(t), config.xi.at(t));
    let gauss = state.gauss();
    let mut mu = gauss.mu().to_vec();
    if lambda != 0.0 {
        for (m, g) in mu.iter_mut().zip(&g_mu) {
            *m += lambda * g;
        }
    }
    let mut c = gauss.factor().clone();
    if eta != 0.0 {
        let mut k = 0;
        for i in 0..p {
            for j in 0..=i {
                let mut v = c.get(i, j) + eta * g_c[k];
                if i == j {
                    v = v.max(config.delta_diag);
                }
                c.set(i, j, v);
                k += 1;
            }
        }
    }
    let transforms = if xi != 0.0 {
        state
            .transforms()
            .iter()
            .zip(&g_omega)
            .map(|(tr, g)| match (tr, g) {
                (MarginalTransform::Bernstein(bp), Some(g)) => {
                    let moved: Vec<f64> = bp.weights().iter().zip(g).map(|(w, gi)| w + xi * gi).collect();
                    Ok(MarginalTransform::Bernstein(bp.with_weights(project_floored(&moved, config.omega_floor)?)?))
                }
                _ => Ok(tr.clone()),
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        state.transforms().to_vec()
    };
    let next = VgcState::new(GaussianFactor::new(mu, c)?, transforms)?;
    Ok((next, StepStats { rejected }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElboEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

impl ElboEstimate {
    fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            value: mean,
            std_error: (var / n as f64).sqrt(),
            n_samples: n,
        }
    }
}

fn elbo_integrand(state: &VgcState, model: &dyn TargetModel, eps: &[f64]) -> Result<f64> {
    let gauss = state.gauss();
    let z = gauss.sample(eps);
    let v = local_objective(state, model, &z)? - gauss.log_density_at_eps(eps);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(VgcError::Range { value: v })
    }
}

/// Monte Carlo estimate of `E[ℓ_s(z̃) - ln q_G(z̃)]`.
pub fn elbo_estimate<R: Rng>(
    state: &VgcState,
    model: &dyn TargetModel,
    n_samples: usize,
    rng: &mut R,
) -> Result<ElboEstimate> {
    if n_samples == 0 {
        return Err(VgcError::Config("elbo_estimate needs at least one sample".into()));
    }
    let (values, _) = evaluate_with_redraw(rng, state.dim(), n_samples, |eps| {
        elbo_integrand(state, model, eps)
    })?;
    Ok(ElboEstimate::from_values(&values))
}

/// The same estimator on caller-supplied draws (common random numbers).
pub fn elbo_from_eps(state: &VgcState, model: &dyn TargetModel, eps: &[Vec<f64>]) -> Result<ElboEstimate> {
    let values = eps
        .par_iter()
        .map(|e| elbo_integrand(state, model, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(ElboEstimate::from_values(&values))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iter: usize,
    pub elbo: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub state: VgcState,
    pub trace: Vec<TracePoint>,
    pub iterations: usize,
    pub converged: bool,
    pub rejected: usize,
}

/// Independent stream for trace estimates so tracing never perturbs the fit.
fn trace_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

pub fn fit(model: &dyn TargetModel, init: VgcState, config: &OptimizerConfig) -> Result<FitResult> {
    fit_with_observer(model, init, config, |_, _| {})
}

/// [`fit`] calling `observer(t, state)` after every iteration.
pub fn fit_with_observer<F>(
    model: &dyn TargetModel,
    init: VgcState,
    config: &OptimizerConfig,
    mut observer: F,
) -> Result<FitResult>
where
    F: FnMut(usize, &VgcState),
{
    config.validate()?;
    init.check_supports(&model.supports())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trng = trace_rng(config.seed);
    let mut state = init;
    let mut trace = Vec::new();
    let mut rejected = 0;
    let mut converged = false;
    let mut iterations = 0;
    // trace points per moving-average window
    let per_window = config.window.div_ceil(config.trace_every).max(1);
    for t in 1..=config.iterations {
        let (next, stats) = step(&state, model, config, t, &mut rng)?;
        state = next;
        rejected += stats.rejected;
        iterations = t;
        observer(t, &state);
        if t % config.trace_every == 0 || t == config.iterations {
            let e = elbo_estimate(&state, model, config.trace_samples, &mut trng)?;
            trace.push(TracePoint {
                iter: t,
                elbo: e.value,
                std_error: e.std_error,
            });
            if config.window > 0 && trace.len() >= 2 * per_window {
                let n = trace.len();
                let mean = |s: &[TracePoint]| s.iter().map(|p| p.elbo).sum::<f64>() / s.len() as f64;
                let recent = mean(&trace[n - per_window..]);
                let before = mean(&trace[n - 2 * per_window..n - per_window]);
                if (recent - before).abs() / before.abs().max(1.0) < config.tol {
                    converged = true;
                    break;
                }
            }
        }
    }
    Ok(FitResult {
        state,
        trace,
        iterations,
        converged,
        rejected,
    })
}

pub fn write_trace_csv(path: impl AsRef<Path>, trace: &[TracePoint]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(["iter", "elbo", "std_error"])?;
    for p in trace {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// `μ = 0`, `C = 0.1 I`, one transform per coordinate.
pub fn initial_state(transforms: Vec<MarginalTransform>) -> Result<VgcState> {
    VgcState::initial(transforms)
}

/// Convenience for tests and bindings: a state from explicit parts.
pub fn state_from_parts(mu: Vec<f64>, c_rows: &[Vec<f64>], transforms: Vec<MarginalTransform>) -> Result<VgcState> {
    VgcState::new(GaussianFactor::new(mu, LowerTriangular::from_rows(c_rows)?)?, transforms)
}
