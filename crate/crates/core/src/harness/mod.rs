//! Experiment runner behind the `vgc` binary.
//!
//! Every run writes `trace.csv`, `state.json`, `margins.csv`, `samples.csv`
//! and `summary.json` into the output directory. Output bytes depend only on
//! the configuration and seed.

mod config;

pub use config::{
    default_optimizer, default_rwmh, Experiment, ExperimentConfig, GibbsConfig, Method, MfvbConfig, ModelConfig,
    OutputConfig, Overrides, VgcLnDetConfig,
};

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, StandardNormal};
use serde::Serialize;
use statrs::distribution::{Continuous, ContinuousCDF, InverseGamma};

use crate::baselines::{
    gibbs_horseshoe, mfvb_horseshoe, rwmh_sample, vgc_ln_deterministic, write_samples_csv, MfvbHorseshoeState,
    VgcLnHorseshoeParams, VgcLnMode,
};
use crate::copula::VgcState;
use crate::diagnostics::{default_options, kl_1d_quadrature, kl_total_2d, rmse_rho};
use crate::error::{Result, VgcError};
use crate::models::{
    generate_poisson_data, linspace, BetaTarget, BivariateLogNormal, GammaTarget, Horseshoe, PoissonLogLinear,
    PoissonRegressionData, SkewNormal, StudentT, TargetModel,
};
use crate::optimizer::{elbo_estimate, fit_with_observer, state_from_parts, write_trace_csv, OptimizerConfig, TracePoint};
use crate::specfun::{norm_cdf, ReferenceCdf};
use crate::support::Support;
use crate::transform::MarginalTransform;

// stream ids carved out of the run seed, disjoint from the optimizer's
const SAMPLE_STREAM: u64 = 2;
const ELBO_STREAM: u64 = 3;

pub fn build_model(model: &ModelConfig) -> Result<Box<dyn TargetModel>> {
    Ok(match model {
        ModelConfig::SkewNormal { alpha } => Box::new(SkewNormal::new(*alpha)?),
        ModelConfig::StudentT { nu } => Box::new(StudentT::new(*nu)?),
        ModelConfig::Gamma { shape, rate } => Box::new(GammaTarget::new(*shape, *rate)?),
        ModelConfig::Beta { a, b } => Box::new(BetaTarget::new(*a, *b)?),
        ModelConfig::BivariateLogNormal {
            mu1,
            mu2,
            sigma1,
            sigma2,
            rho,
        } => Box::new(BivariateLogNormal::new(*mu1, *mu2, *sigma1, *sigma2, *rho)?),
        ModelConfig::Horseshoe { y } => Box::new(Horseshoe::new(*y)?),
        ModelConfig::Poisson {
            data,
            beta,
            cells,
            data_seed,
            standardize,
            a0,
            b0,
        } => {
            let raw = match data {
                Some(path) => PoissonRegressionData::from_csv(path)?,
                None => generate_poisson_data(*beta, &linspace(-1.0, 1.0, *cells), *data_seed)?,
            };
            let data = if *standardize { raw.standardized() } else { raw };
            Box::new(PoissonLogLinear::new(data, *a0, *b0)?)
        }
    })
}

/// Reference CDF of the Bernstein transforms; the horseshoe uses Exp(0.01)
/// on both coordinates.
pub fn reference_for(experiment: Experiment, support: Support) -> Result<ReferenceCdf> {
    match experiment {
        Experiment::Horseshoe => ReferenceCdf::exponential(0.01),
        _ => Ok(ReferenceCdf::default_for(support)),
    }
}

/// Starting state of a stochastic VI method.
pub fn initial_vi_state(
    experiment: Experiment,
    method: Method,
    k: usize,
    supports: &[Support],
) -> Result<VgcState> {
    let p = supports.len();
    let transforms = supports
        .iter()
        .map(|&s| match method {
            Method::VgcBp | Method::VitBp => {
                MarginalTransform::bernstein(k, vec![1.0 / k as f64; k], reference_for(experiment, s)?)
            }
            Method::VgcLn => match s {
                Support::Positive => Ok(MarginalTransform::Exponential),
                Support::Real => Ok(MarginalTransform::Identity),
                Support::Unit => Err(VgcError::Config("vgc_ln has no transform onto (0, 1)".into())),
            },
            Method::Vg => match s {
                Support::Real => Ok(MarginalTransform::Identity),
                _ => Err(VgcError::Config("vg needs real-valued coordinates".into())),
            },
            other => Err(VgcError::Config(format!("`{other}` is not a stochastic VI method"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let mu = vec![0.0; p];
    if method == Method::VitBp {
        // the Gaussian factor stays at the standard normal
        let rows: Vec<Vec<f64>> = (0..p).map(|i| (0..=i).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        state_from_parts(mu, &rows, transforms)
    } else {
        VgcState::initial(transforms)
    }
}

/// Optimizer settings as the run uses them; VIT freezes `μ` and `C`.
pub fn effective_optimizer(cfg: &ExperimentConfig) -> OptimizerConfig {
    if cfg.method == Method::VitBp {
        cfg.optimizer.clone().weights_only()
    } else {
        cfg.optimizer.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RmsePoint {
    pub iter: usize,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordinateSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub experiment: Experiment,
    pub method: Method,
    pub seed: u64,
    pub k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elbo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elbo_std_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_evidence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rejected: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acceptance_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kl_1d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kl_total: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_hat: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub rmse_trace: Vec<RmsePoint>,
    /// Moments of the draws behind `samples.csv` (the full chain for samplers).
    pub posterior: Vec<CoordinateSummary>,
    pub correlation: Vec<Vec<f64>>,
}

/// One row of `margins.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginRow {
    pub coordinate: usize,
    pub x: f64,
    pub density: f64,
    pub ln_density: f64,
    pub target_density: Option<f64>,
}

/// What a method leaves behind before diagnostics.
enum Fitted {
    Vgc {
        state: VgcState,
        trace: Vec<TracePoint>,
        elbo: Option<f64>,
        iterations: usize,
        converged: bool,
        rejected: usize,
        rmse: Vec<RmsePoint>,
    },
    Mfvb {
        state: MfvbHorseshoeState,
        elbo: f64,
    },
    Chain {
        samples: Vec<Vec<f64>>,
        acceptance_rate: Option<f64>,
    },
}

fn horseshoe_y(cfg: &ExperimentConfig) -> Result<f64> {
    match cfg.model {
        ModelConfig::Horseshoe { y } => Ok(y),
        _ => Err(VgcError::Config(format!("`{}` needs the horseshoe model", cfg.method))),
    }
}

fn true_rho(model: &ModelConfig) -> Option<f64> {
    match model {
        ModelConfig::BivariateLogNormal { rho, .. } => Some(*rho),
        _ => None,
    }
}

fn fit_method(cfg: &ExperimentConfig, model: &dyn TargetModel) -> Result<Fitted> {
    match cfg.method {
        m if m.is_stochastic_vi() => {
            let init = initial_vi_state(cfg.experiment, m, cfg.k, &model.supports())?;
            let opt = effective_optimizer(cfg);
            let rho = true_rho(&cfg.model).filter(|r| *r != 0.0);
            let mut rmse = Vec::new();
            let mut failure = None;
            let r = fit_with_observer(model, init, &opt, |t, s| {
                if let Some(rho) = rho {
                    if t % opt.trace_every == 0 || t == opt.iterations {
                        match rmse_rho(s.correlation_of()[0][1], rho) {
                            Ok(v) => rmse.push(RmsePoint { iter: t, rmse: v }),
                            Err(e) => failure = Some(e),
                        }
                    }
                }
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
            Ok(Fitted::Vgc {
                state: r.state,
                trace: r.trace,
                elbo: None,
                iterations: r.iterations,
                converged: r.converged,
                rejected: r.rejected,
                rmse,
            })
        }
        Method::VgcLnDet => {
            let y = horseshoe_y(cfg)?;
            let mode = if cfg.vgc_ln_det.diagonal { VgcLnMode::Diag } else { VgcLnMode::Full };
            let init = VgcLnHorseshoeParams::new(0.0, 0.0, 1.0, 0.0, 1.0)?;
            let f = vgc_ln_deterministic(y, mode, init, cfg.vgc_ln_det.max_iters)?;
            let p = f.params;
            let state = state_from_parts(
                vec![p.mu1, p.mu2],
                &[vec![p.c11, 0.0], vec![p.c21, p.c22]],
                vec![MarginalTransform::Exponential; 2],
            )?;
            Ok(Fitted::Vgc {
                state,
                trace: vec![TracePoint {
                    iter: f.iterations,
                    elbo: f.elbo,
                    std_error: 0.0,
                }],
                elbo: Some(f.elbo),
                iterations: f.iterations,
                converged: f.converged,
                rejected: 0,
                rmse: Vec::new(),
            })
        }
        Method::Mfvb => {
            let (state, elbo) = mfvb_horseshoe(horseshoe_y(cfg)?, cfg.mfvb.max_iters, cfg.mfvb.tol)?;
            Ok(Fitted::Mfvb { state, elbo })
        }
        Method::Gibbs => {
            let g = cfg.gibbs;
            let samples = gibbs_horseshoe(horseshoe_y(cfg)?, g.n_samples, g.burn_in, cfg.seed);
            Ok(Fitted::Chain {
                samples: samples.into_iter().map(|s| s.to_vec()).collect(),
                acceptance_rate: None,
            })
        }
        Method::Rwmh => {
            let r = rwmh_sample(model, &cfg.rwmh)?;
            Ok(Fitted::Chain {
                samples: r.samples,
                acceptance_rate: Some(r.acceptance_rate),
            })
        }
        _ => unreachable!("stochastic methods are matched above"),
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw_vgc(state: &VgcState, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let p = state.dim();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let eps: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        match state.push_sample(&eps) {
            Ok((_, x)) => out.push(x),
            Err(e) if e.is_sample_rejection() => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn mfvb_dists(s: &MfvbHorseshoeState) -> Result<(InverseGamma, statrs::distribution::Gamma)> {
    let bad = |e: statrs::distribution::InverseGammaError| VgcError::Parameter(e.to_string());
    let tau = InverseGamma::new(s.alpha1, s.beta1).map_err(bad)?;
    let gamma = statrs::distribution::Gamma::new(s.alpha2, s.beta2)
        .map_err(|e| VgcError::Parameter(e.to_string()))?;
    Ok((tau, gamma))
}

fn draw_mfvb(s: &MfvbHorseshoeState, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let bad = |e: rand_distr::GammaError| VgcError::Parameter(e.to_string());
    let tau = Gamma::new(s.alpha1, 1.0 / s.beta1).map_err(bad)?;
    let gamma = Gamma::new(s.alpha2, 1.0 / s.beta2).map_err(bad)?;
    Ok((0..n).map(|_| vec![1.0 / rng.sample(tau), rng.sample(gamma)]).collect())
}

fn thin(samples: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let stride = samples.len().div_ceil(n).max(1);
    samples.iter().step_by(stride).cloned().collect()
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

fn summarize(names: &[String], samples: &[Vec<f64>]) -> (Vec<CoordinateSummary>, Vec<Vec<f64>>) {
    let p = names.len();
    let n = samples.len() as f64;
    let means: Vec<f64> = (0..p).map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / n).collect();
    let mut cov = vec![vec![0.0; p]; p];
    for s in samples {
        for i in 0..p {
            for j in 0..=i {
                cov[i][j] += (s[i] - means[i]) * (s[j] - means[j]);
            }
        }
    }
    let denom = (n - 1.0).max(1.0);
    let sd: Vec<f64> = (0..p).map(|j| (cov[j][j] / denom).sqrt()).collect();
    let mut corr = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..=i {
            let r = if i == j { 1.0 } else { cov[i][j] / denom / (sd[i] * sd[j]) };
            corr[i][j] = r;
            corr[j][i] = r;
        }
    }
    let coords = (0..p)
        .map(|j| {
            let mut v: Vec<f64> = samples.iter().map(|s| s[j]).collect();
            v.sort_by(f64::total_cmp);
            CoordinateSummary {
                name: names[j].clone(),
                mean: means[j],
                sd: sd[j],
                q05: quantile_sorted(&v, 0.05),
                q50: quantile_sorted(&v, 0.5),
                q95: quantile_sorted(&v, 0.95),
            }
        })
        .collect();
    (coords, corr)
}

/// Normalized target margin where it is available in closed form.
fn target_margin(cfg: &ExperimentConfig, model: &dyn TargetModel, j: usize, x: f64) -> Option<f64> {
    match &cfg.model {
        ModelConfig::BivariateLogNormal {
            mu1,
            mu2,
            sigma1,
            sigma2,
            ..
        } => {
            let (m, s) = if j == 0 { (*mu1, *sigma1) } else { (*mu2, *sigma2) };
            let z = (x.ln() - m) / s;
            Some((-0.5 * z * z).exp() / (x * s * (2.0 * std::f64::consts::PI).sqrt()))
        }
        _ if model.dim() == 1 => {
            let ln_z = model.log_normalizer()?;
            model.log_joint(&[x]).ok().map(|l| (l - ln_z).exp())
        }
        _ => None,
    }
}

fn margin_rows(cfg: &ExperimentConfig, model: &dyn TargetModel, j: usize, points: &[(f64, f64)], rows: &mut Vec<MarginRow>) {
    for &(x, d) in points {
        rows.push(MarginRow {
            coordinate: j,
            x,
            density: d,
            ln_density: d.ln(),
            target_density: target_margin(cfg, model, j, x),
        });
    }
}

/// Latent grid pushed through each margin of a VGC state.
fn vgc_margins(cfg: &ExperimentConfig, model: &dyn TargetModel, state: &VgcState) -> Result<Vec<MarginRow>> {
    let mut rows = Vec::new();
    for j in 0..state.dim() {
        let (m, s) = (state.gauss().mu()[j], state.gauss().sigma(j));
        let mut pts = Vec::new();
        for t in linspace(-5.0, 5.0, cfg.output.grid_points) {
            let x = state.transforms()[j].forward(m + s * t)?;
            // saturated ends of bounded supports carry no density
            if let Ok(d) = state.marginal_pdf(j, x) {
                if d.is_finite() && d > 0.0 && pts.last().is_none_or(|&(px, _)| x > px) {
                    pts.push((x, d));
                }
            }
        }
        margin_rows(cfg, model, j, &pts, &mut rows);
    }
    Ok(rows)
}

fn mfvb_margins(cfg: &ExperimentConfig, model: &dyn TargetModel, s: &MfvbHorseshoeState) -> Result<Vec<MarginRow>> {
    let (tau, gamma) = mfvb_dists(s)?;
    let mut rows = Vec::new();
    let grid = linspace(-5.0, 5.0, cfg.output.grid_points);
    let tau_pts: Vec<(f64, f64)> = grid
        .iter()
        .map(|&t| {
            let x = tau.inverse_cdf(norm_cdf(t));
            (x, tau.pdf(x))
        })
        .collect();
    let gamma_pts: Vec<(f64, f64)> = grid
        .iter()
        .map(|&t| {
            let x = gamma.inverse_cdf(norm_cdf(t));
            (x, gamma.pdf(x))
        })
        .collect();
    margin_rows(cfg, model, 0, &tau_pts, &mut rows);
    margin_rows(cfg, model, 1, &gamma_pts, &mut rows);
    Ok(rows)
}

/// Histogram between the 0.5% and 99.5% quantiles of each coordinate.
fn chain_margins(cfg: &ExperimentConfig, model: &dyn TargetModel, samples: &[Vec<f64>]) -> Vec<MarginRow> {
    let bins = cfg.output.grid_points - 1;
    let n = samples.len() as f64;
    let mut rows = Vec::new();
    for j in 0..model.dim() {
        let mut v: Vec<f64> = samples.iter().map(|s| s[j]).collect();
        v.sort_by(f64::total_cmp);
        let (lo, hi) = (quantile_sorted(&v, 0.005), quantile_sorted(&v, 0.995));
        let width = (hi - lo) / bins as f64;
        if !(width > 0.0) {
            continue;
        }
        let mut counts = vec![0usize; bins];
        for &x in &v {
            if x >= lo && x < hi {
                counts[(((x - lo) / width) as usize).min(bins - 1)] += 1;
            }
        }
        let pts: Vec<(f64, f64)> = counts
            .iter()
            .enumerate()
            .map(|(b, &c)| (lo + (b as f64 + 0.5) * width, c as f64 / (n * width)))
            .collect();
        margin_rows(cfg, model, j, &pts, &mut rows);
    }
    rows
}

fn write_margins(path: &Path, rows: &[MarginRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["coordinate", "x", "density", "ln_density", "target_density"])?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Runs one configured experiment and writes its outputs to `cfg.out`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Summary> {
    let model = build_model(&cfg.model)?;
    let model = model.as_ref();
    let names = model.coordinate_names();
    log::info!("{} / {} (seed {})", cfg.experiment, cfg.method, cfg.seed);
    let fitted = fit_method(cfg, model)?;

    fs::create_dir_all(&cfg.out)?;
    let out = cfg.out.as_path();
    let mut draw_rng = stream_rng(cfg.seed, SAMPLE_STREAM);
    let log_evidence = match &cfg.model {
        ModelConfig::Horseshoe { y } => Some(Horseshoe::new(*y)?.log_evidence()?),
        _ => None,
    };
    let mut summary = Summary {
        experiment: cfg.experiment,
        method: cfg.method,
        seed: cfg.seed,
        k: cfg.k,
        elbo: None,
        elbo_std_error: None,
        log_evidence,
        iterations: None,
        converged: None,
        rejected: None,
        acceptance_rate: None,
        kl_1d: None,
        kl_total: None,
        rho_hat: None,
        rmse_trace: Vec::new(),
        posterior: Vec::new(),
        correlation: Vec::new(),
    };

    let (draws, full) = match fitted {
        Fitted::Vgc {
            state,
            trace,
            elbo,
            iterations,
            converged,
            rejected,
            rmse,
        } => {
            write_trace_csv(out.join("trace.csv"), &trace)?;
            write_json(&out.join("state.json"), &state)?;
            write_margins(&out.join("margins.csv"), &vgc_margins(cfg, model, &state)?)?;
            match elbo {
                Some(v) => {
                    summary.elbo = Some(v);
                    summary.elbo_std_error = Some(0.0);
                }
                None => {
                    let mut rng = stream_rng(cfg.seed, ELBO_STREAM);
                    let e = elbo_estimate(&state, model, cfg.output.elbo_samples, &mut rng)?;
                    summary.elbo = Some(e.value);
                    summary.elbo_std_error = Some(e.std_error);
                }
            }
            summary.iterations = Some(iterations);
            summary.converged = Some(converged);
            summary.rejected = Some(rejected);
            summary.rmse_trace = rmse;
            match cfg.experiment {
                Experiment::Fit1d => summary.kl_1d = Some(kl_1d_quadrature(&state, 0, model)?),
                Experiment::Bvln => {
                    summary.kl_total = Some(kl_total_2d(&state, model, default_options())?);
                    summary.rho_hat = Some(state.correlation_of()[0][1]);
                }
                _ => {}
            }
            let d = draw_vgc(&state, cfg.output.draws, &mut draw_rng)?;
            (d, None)
        }
        Fitted::Mfvb { state, elbo } => {
            write_trace_csv(
                out.join("trace.csv"),
                &[TracePoint {
                    iter: 0,
                    elbo,
                    std_error: 0.0,
                }],
            )?;
            write_json(&out.join("state.json"), &state)?;
            write_margins(&out.join("margins.csv"), &mfvb_margins(cfg, model, &state)?)?;
            summary.elbo = Some(elbo);
            summary.elbo_std_error = Some(0.0);
            (draw_mfvb(&state, cfg.output.draws, &mut draw_rng)?, None)
        }
        Fitted::Chain {
            samples,
            acceptance_rate,
        } => {
            write_trace_csv(out.join("trace.csv"), &[])?;
            #[derive(Serialize)]
            struct ChainState<'a> {
                method: Method,
                kept_draws: usize,
                last: &'a [f64],
            }
            let last = samples.last().map(|v| v.as_slice()).unwrap_or(&[]);
            write_json(
                &out.join("state.json"),
                &ChainState {
                    method: cfg.method,
                    kept_draws: samples.len(),
                    last,
                },
            )?;
            write_margins(&out.join("margins.csv"), &chain_margins(cfg, model, &samples))?;
            summary.acceptance_rate = acceptance_rate;
            (thin(&samples, cfg.output.draws), Some(samples))
        }
    };
    if draws.is_empty() {
        return Err(VgcError::Invariant("run produced no draws".into()));
    }
    let (posterior, correlation) = summarize(&names, full.as_deref().unwrap_or(&draws));
    summary.posterior = posterior;
    summary.correlation = correlation;
    write_samples_csv(out.join("samples.csv"), &names, &draws)?;
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}
