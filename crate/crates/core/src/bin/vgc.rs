use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use vgc_core::harness::{run_experiment, Experiment, ExperimentConfig, Method, Overrides};
use vgc_core::optimizer::EntropyScheme;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExperimentArg {
    Fit1d,
    Bvln,
    Horseshoe,
    Poisson,
}

impl From<ExperimentArg> for Experiment {
    fn from(e: ExperimentArg) -> Self {
        match e {
            ExperimentArg::Fit1d => Experiment::Fit1d,
            ExperimentArg::Bvln => Experiment::Bvln,
            ExperimentArg::Horseshoe => Experiment::Horseshoe,
            ExperimentArg::Poisson => Experiment::Poisson,
        }
    }
}

const DEFAULTS: &str = "\
Config file (TOML, every key optional):
  experiment, method, seed = 0, k = 10, out = \"runs/<experiment>-<method>-seed<seed>\"
  [model]            target = skew_normal{alpha} | student_t{nu} | gamma{shape,rate} | beta{a,b}
                     | bivariate_log_normal{mu1,mu2,sigma1,sigma2,rho} | horseshoe{y}
                     | poisson{data, beta = [1, 0.5, -0.3], cells = 2500, data_seed = 11,
                               standardize = true, a0 = 1, b0 = 1}
  [optimizer]        iterations, samples_per_iter, lambda, eta, xi, scheme, window, tol,
                     trace_every, trace_samples, delta_diag, omega_floor
                     (step sizes: { kind = \"decaying\", value, kappa } or { kind = \"constant\", value })
  [method_settings.<method>]
                     vgc_bp/vgc_ln/vit_bp/vg: optimizer keys, applied over [optimizer]
                     rwmh: n_samples, burn_in_frac, scale, init, laplace
                     gibbs: n_samples = 1000000 (kept), burn_in = 100000
                     mfvb: max_iters = 10000, tol = 1e-12
                     vgc_ln_det: max_iters = 100000, diagonal = false
  [output]           draws = 10000, grid_points = 201, elbo_samples = 20000

Default models:
  fit1d gamma(5, 2); bvln (0.1, 0.1, 0.5, 0.5, rho 0.4); horseshoe y = 0.01; poisson simulated

Default optimizer (decaying steps value/(1 + kappa t), kappa = 1e-3 unless noted, window = 0):
  fit1d      20000 iters, S = 10, lambda = eta = 0.01, xi = 0.002
  bvln       vgc_bp as fit1d; vgc_ln 20000 iters, S = 1, lambda = eta = 0.01
  horseshoe  vgc_bp 200000 iters, S = 10, lambda = eta = 1e-3, xi = 0.01, kappa = 1e-5,
             omega_floor = 1e-3, delta_diag = 0.05, trace_every = 1000
             vgc_ln 50000 iters, S = 10, lambda = eta = 3e-3, kappa = 1e-4, delta_diag = 0.05
  poisson    600000 iters, S = 5, lambda = 1e-4, eta = 2e-5, xi = 2e-6, kappa = 1e-5,
             delta_diag = 1e-3, trace_every = 5000
  all        scheme = stochastic, tol = 1e-4, trace_samples = 200, omega_floor = 0,
             delta_diag = 1e-8 unless noted
Default rwmh: 1000000 draws, burn_in_frac 0.1; poisson uses a Laplace-shaped walk with
  scale 1.19, horseshoe an isotropic walk with scale 2.0 on the log scale

Environment:
  VGC_THREADS  worker threads for per-iteration Monte Carlo draws
  RUST_LOG     log filter (e.g. info)";

/// Variational Gaussian copula experiments.
#[derive(Debug, Parser)]
#[command(name = "vgc", version, after_help = DEFAULTS)]
struct Cli {
    experiment: ExperimentArg,
    /// TOML configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// vgc_bp, vgc_ln, vit_bp, vg, mfvb, gibbs, rwmh or vgc_ln_det.
    #[arg(long)]
    method: Option<String>,
    /// Bernstein degree.
    #[arg(long)]
    k: Option<usize>,
    /// Entropy gradient: stochastic or analytic.
    #[arg(long)]
    scheme: Option<String>,
}

fn run(cli: Cli) -> vgc_core::Result<()> {
    if let Ok(v) = std::env::var("VGC_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| vgc_core::VgcError::Config(format!("VGC_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| vgc_core::VgcError::Config(e.to_string()))?;
    }
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out,
        method: cli.method.as_deref().map(str::parse::<Method>).transpose()?,
        k: cli.k,
        scheme: cli.scheme.as_deref().map(str::parse::<EntropyScheme>).transpose()?,
    };
    let experiment = cli.experiment.into();
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path, experiment, &overrides)?,
        None => ExperimentConfig::defaults(experiment, &overrides)?,
    };
    let summary = run_experiment(&cfg)?;
    match summary.elbo {
        Some(e) => println!("{} {} -> {} (elbo {e:.4})", cfg.experiment, cfg.method, cfg.out.display()),
        None => println!("{} {} -> {}", cfg.experiment, cfg.method, cfg.out.display()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vgc: {e}");
            ExitCode::FAILURE
        }
    }
}
