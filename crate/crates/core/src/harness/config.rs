use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::baselines::RwmhConfig;
use crate::error::{Result, VgcError};
use crate::optimizer::{EntropyScheme, OptimizerConfig, StepSchedule};
use crate::transform::DEFAULT_DEGREE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Fit1d,
    Bvln,
    Horseshoe,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    VgcBp,
    VgcLn,
    VitBp,
    Vg,
    Mfvb,
    Gibbs,
    Rwmh,
    VgcLnDet,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Fit1d => "fit1d",
            Experiment::Bvln => "bvln",
            Experiment::Horseshoe => "horseshoe",
            Experiment::Poisson => "poisson",
        }
    }

    pub fn methods(self) -> &'static [Method] {
        use Method::*;
        match self {
            Experiment::Fit1d => &[VgcBp, VitBp, Vg, VgcLn],
            Experiment::Bvln => &[VgcBp, VgcLn],
            Experiment::Horseshoe => &[VgcBp, VgcLn, VgcLnDet, Mfvb, Gibbs, Rwmh],
            Experiment::Poisson => &[VgcBp, Rwmh],
        }
    }

    pub fn default_method(self) -> Method {
        Method::VgcBp
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = VgcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fit1d" => Ok(Experiment::Fit1d),
            "bvln" => Ok(Experiment::Bvln),
            "horseshoe" => Ok(Experiment::Horseshoe),
            "poisson" => Ok(Experiment::Poisson),
            other => Err(VgcError::Config(format!("unknown experiment `{other}`"))),
        }
    }
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::VgcBp => "vgc_bp",
            Method::VgcLn => "vgc_ln",
            Method::VitBp => "vit_bp",
            Method::Vg => "vg",
            Method::Mfvb => "mfvb",
            Method::Gibbs => "gibbs",
            Method::Rwmh => "rwmh",
            Method::VgcLnDet => "vgc_ln_det",
        }
    }

    /// Methods driven by the stochastic optimizer.
    pub fn is_stochastic_vi(self) -> bool {
        matches!(self, Method::VgcBp | Method::VgcLn | Method::VitBp | Method::Vg)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = VgcError;

    fn from_str(s: &str) -> Result<Self> {
        [
            Method::VgcBp,
            Method::VgcLn,
            Method::VitBp,
            Method::Vg,
            Method::Mfvb,
            Method::Gibbs,
            Method::Rwmh,
            Method::VgcLnDet,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| VgcError::Config(format!("unknown method `{s}`")))
    }
}

fn default_beta() -> [f64; 3] {
    [1.0, 0.5, -0.3]
}
fn default_cells() -> usize {
    2500
}
fn default_data_seed() -> u64 {
    11
}
fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}

/// Target of an experiment, tagged by `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "target", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    SkewNormal {
        alpha: f64,
    },
    StudentT {
        nu: f64,
    },
    Gamma {
        shape: f64,
        rate: f64,
    },
    Beta {
        a: f64,
        b: f64,
    },
    BivariateLogNormal {
        mu1: f64,
        mu2: f64,
        sigma1: f64,
        sigma2: f64,
        rho: f64,
    },
    Horseshoe {
        y: f64,
    },
    /// Counts read from `data` (columns `y,u`) or simulated on an even grid
    /// over [-1, 1].
    Poisson {
        #[serde(default)]
        data: Option<PathBuf>,
        #[serde(default = "default_beta")]
        beta: [f64; 3],
        #[serde(default = "default_cells")]
        cells: usize,
        #[serde(default = "default_data_seed")]
        data_seed: u64,
        #[serde(default = "yes")]
        standardize: bool,
        #[serde(default = "one")]
        a0: f64,
        #[serde(default = "one")]
        b0: f64,
    },
}

impl ModelConfig {
    pub fn default_for(experiment: Experiment) -> Self {
        match experiment {
            Experiment::Fit1d => ModelConfig::Gamma { shape: 5.0, rate: 2.0 },
            Experiment::Bvln => ModelConfig::BivariateLogNormal {
                mu1: 0.1,
                mu2: 0.1,
                sigma1: 0.5,
                sigma2: 0.5,
                rho: 0.4,
            },
            Experiment::Horseshoe => ModelConfig::Horseshoe { y: 0.01 },
            Experiment::Poisson => ModelConfig::Poisson {
                data: None,
                beta: default_beta(),
                cells: default_cells(),
                data_seed: default_data_seed(),
                standardize: true,
                a0: 1.0,
                b0: 1.0,
            },
        }
    }

    fn fits(&self, experiment: Experiment) -> bool {
        use ModelConfig::*;
        match experiment {
            Experiment::Fit1d => matches!(self, SkewNormal { .. } | StudentT { .. } | Gamma { .. } | Beta { .. }),
            Experiment::Bvln => matches!(self, BivariateLogNormal { .. }),
            Experiment::Horseshoe => matches!(self, Horseshoe { .. }),
            Experiment::Poisson => matches!(self, Poisson { .. }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsConfig {
    /// Draws kept after burn-in.
    pub n_samples: usize,
    pub burn_in: usize,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            n_samples: 1_000_000,
            burn_in: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfvbConfig {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for MfvbConfig {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VgcLnDetConfig {
    pub max_iters: usize,
    /// Restrict `C` to its diagonal.
    pub diagonal: bool,
}

impl Default for VgcLnDetConfig {
    fn default() -> Self {
        Self {
            max_iters: 100_000,
            diagonal: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Rows written to `samples.csv`; sampler chains are thinned to fit.
    pub draws: usize,
    /// Points per coordinate in `margins.csv`.
    pub grid_points: usize,
    /// Monte Carlo draws behind the final ELBO in `summary.json`.
    pub elbo_samples: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            draws: 10_000,
            grid_points: 201,
            elbo_samples: 20_000,
        }
    }
}

/// File contents before defaults are filled in.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Option<Experiment>,
    method: Option<Method>,
    seed: Option<u64>,
    k: Option<usize>,
    out: Option<PathBuf>,
    model: Option<ModelConfig>,
    #[serde(default)]
    optimizer: toml::Table,
    #[serde(default)]
    method_settings: BTreeMap<String, toml::Table>,
    #[serde(default)]
    output: OutputConfig,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub method: Option<Method>,
    pub k: Option<usize>,
    pub scheme: Option<EntropyScheme>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub method: Method,
    pub seed: u64,
    /// Bernstein degree.
    pub k: usize,
    pub out: PathBuf,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub rwmh: RwmhConfig,
    pub gibbs: GibbsConfig,
    pub mfvb: MfvbConfig,
    pub vgc_ln_det: VgcLnDetConfig,
    pub output: OutputConfig,
}

/// Tuned step sizes per experiment and method; everything else keeps the
/// optimizer defaults.
pub fn default_optimizer(experiment: Experiment, method: Method) -> OptimizerConfig {
    let base = OptimizerConfig {
        window: 0,
        ..Default::default()
    };
    match (experiment, method) {
        (Experiment::Fit1d, _) => OptimizerConfig {
            samples_per_iter: 10,
            xi: StepSchedule::decaying(0.002),
            ..base
        },
        (Experiment::Bvln, Method::VgcBp) => OptimizerConfig {
            samples_per_iter: 10,
            xi: StepSchedule::decaying(0.002),
            ..base
        },
        (Experiment::Bvln, _) => base,
        (Experiment::Horseshoe, Method::VgcBp) => {
            let slow = |value| StepSchedule::Decaying { value, kappa: 1e-5 };
            OptimizerConfig {
                iterations: 200_000,
                samples_per_iter: 10,
                lambda: slow(1e-3),
                eta: slow(1e-3),
                xi: slow(1e-2),
                omega_floor: 1e-3,
                delta_diag: 0.05,
                trace_every: 1000,
                ..base
            }
        }
        (Experiment::Horseshoe, _) => OptimizerConfig {
            iterations: 50_000,
            samples_per_iter: 10,
            lambda: StepSchedule::Decaying { value: 3e-3, kappa: 1e-4 },
            eta: StepSchedule::Decaying { value: 3e-3, kappa: 1e-4 },
            delta_diag: 0.05,
            trace_every: 500,
            ..base
        },
        (Experiment::Poisson, _) => {
            let slow = |value| StepSchedule::Decaying { value, kappa: 1e-5 };
            OptimizerConfig {
                iterations: 600_000,
                samples_per_iter: 5,
                lambda: slow(1e-4),
                eta: slow(2e-5),
                xi: slow(2e-6),
                delta_diag: 1e-3,
                trace_every: 5000,
                ..base
            }
        }
    }
}

pub fn default_rwmh(experiment: Experiment) -> RwmhConfig {
    match experiment {
        Experiment::Poisson => RwmhConfig {
            n_samples: 1_000_000,
            scale: 2.38 / 2.0,
            laplace: true,
            ..Default::default()
        },
        _ => RwmhConfig {
            n_samples: 1_000_000,
            scale: 2.0,
            ..Default::default()
        },
    }
}

fn merge(base: toml::Table, overlay: &toml::Table) -> toml::Table {
    let mut out = base;
    for (k, v) in overlay {
        out.insert(k.clone(), v.clone());
    }
    out
}

fn settle<T: Serialize + DeserializeOwned>(base: &T, layers: &[&toml::Table], what: &str) -> Result<T> {
    let mut table = toml::Table::try_from(base).map_err(|e| VgcError::Config(format!("{what}: {e}")))?;
    for layer in layers {
        table = merge(table, layer);
    }
    table.try_into().map_err(|e| VgcError::Config(format!("{what}: {e}")))
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>, experiment: Experiment, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml_str(&text, experiment, overrides)
    }

    /// Defaults only, as if given an empty file.
    pub fn defaults(experiment: Experiment, overrides: &Overrides) -> Result<Self> {
        Self::from_toml_str("", experiment, overrides)
    }

    pub fn from_toml_str(text: &str, experiment: Experiment, overrides: &Overrides) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| VgcError::Config(e.to_string()))?;
        if let Some(e) = raw.experiment {
            if e != experiment {
                return Err(VgcError::Config(format!("config is for `{e}` but `{experiment}` was requested")));
            }
        }
        let method = overrides.method.or(raw.method).unwrap_or(experiment.default_method());
        if !experiment.methods().contains(&method) {
            return Err(VgcError::Config(format!("method `{method}` is not available for `{experiment}`")));
        }
        let model = raw.model.unwrap_or_else(|| ModelConfig::default_for(experiment));
        if !model.fits(experiment) {
            return Err(VgcError::Config(format!("model {model:?} does not belong to `{experiment}`")));
        }
        if let ModelConfig::Poisson { data: Some(p), .. } = &model {
            if !p.exists() {
                return Err(VgcError::Config(format!("data file {} does not exist", p.display())));
            }
        }
        for name in raw.method_settings.keys() {
            Method::from_str(name)?;
        }
        let seed = overrides.seed.or(raw.seed).unwrap_or(0);
        let k = overrides.k.or(raw.k).unwrap_or(DEFAULT_DEGREE);
        if k == 0 {
            return Err(VgcError::Config("k must be positive".into()));
        }
        let empty = toml::Table::new();
        let own = raw.method_settings.get(method.name()).unwrap_or(&empty);

        let vi_own = if method.is_stochastic_vi() { own } else { &empty };
        let mut optimizer = settle(&default_optimizer(experiment, method), &[&raw.optimizer, vi_own], "optimizer")?;
        optimizer.seed = seed;
        if let Some(s) = overrides.scheme {
            optimizer.scheme = s;
        }
        optimizer.validate()?;

        let pick = |m: Method| if m == method { own } else { &empty };
        let mut rwmh = settle(&default_rwmh(experiment), &[pick(Method::Rwmh)], "rwmh")?;
        rwmh.seed = seed;
        let gibbs = settle(&GibbsConfig::default(), &[pick(Method::Gibbs)], "gibbs")?;
        let mfvb = settle(&MfvbConfig::default(), &[pick(Method::Mfvb)], "mfvb")?;
        let vgc_ln_det = settle(&VgcLnDetConfig::default(), &[pick(Method::VgcLnDet)], "vgc_ln_det")?;
        if gibbs.n_samples == 0 {
            return Err(VgcError::Config("gibbs needs n_samples > 0".into()));
        }
        if raw.output.draws == 0 || raw.output.grid_points < 2 || raw.output.elbo_samples < 2 {
            return Err(VgcError::Config("output needs draws > 0, grid_points > 1, elbo_samples > 1".into()));
        }

        let out = overrides
            .out
            .clone()
            .or(raw.out)
            .unwrap_or_else(|| PathBuf::from(format!("runs/{experiment}-{method}-seed{seed}")));
        Ok(ExperimentConfig {
            experiment,
            method,
            seed,
            k,
            out,
            model,
            optimizer,
            rwmh,
            gibbs,
            mfvb,
            vgc_ln_det,
            output: raw.output,
        })
    }
}
