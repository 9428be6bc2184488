//! Python bindings: transforms, copula states, target models, fitting and
//! the experiment runner.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyTuple};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use vgc_core::harness::{build_model, run_experiment as run, Experiment, ExperimentConfig, ModelConfig, Overrides};
use vgc_core::optimizer::{self, OptimizerConfig};
use vgc_core::{MarginalTransform, ReferenceCdf, Support, TargetModel, VgcError, VgcState};

fn err(e: VgcError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn support_name(s: Support) -> &'static str {
    match s {
        Support::Real => "real",
        Support::Positive => "positive",
        Support::Unit => "unit",
    }
}

/// Round-trip keyword arguments through JSON into a serde type.
fn from_kwargs<T: serde::de::DeserializeOwned>(py: Python<'_>, kwargs: &Bound<'_, PyDict>) -> PyResult<T> {
    let text: String = py.import("json")?.call_method1("dumps", (kwargs,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_python<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Marginal map `x = h(z)`.
#[pyclass(name = "Transform", module = "vgc", from_py_object)]
#[derive(Clone)]
struct PyTransform(MarginalTransform);

#[pymethods]
impl PyTransform {
    /// Bernstein transform of degree `k`; `reference` is "normal",
    /// "exponential" (with `rate`) or "beta22".
    #[new]
    #[pyo3(signature = (weights, reference = "normal", rate = 1.0))]
    fn new(weights: Vec<f64>, reference: &str, rate: f64) -> PyResult<Self> {
        let r = match reference {
            "normal" => ReferenceCdf::StdNormal,
            "exponential" => ReferenceCdf::exponential(rate).map_err(err)?,
            "beta22" => ReferenceCdf::Beta22,
            other => return Err(PyValueError::new_err(format!("unknown reference `{other}`"))),
        };
        MarginalTransform::bernstein(weights.len(), weights, r).map(Self).map_err(err)
    }

    #[staticmethod]
    fn identity() -> Self {
        Self(MarginalTransform::Identity)
    }

    #[staticmethod]
    fn exponential() -> Self {
        Self(MarginalTransform::Exponential)
    }

    /// Uniform-weight Bernstein transform with the default reference for a
    /// support ("real", "positive" or "unit").
    #[staticmethod]
    fn uniform(support: &str, k: usize) -> PyResult<Self> {
        let s = match support {
            "real" => Support::Real,
            "positive" => Support::Positive,
            "unit" => Support::Unit,
            other => return Err(PyValueError::new_err(format!("unknown support `{other}`"))),
        };
        MarginalTransform::bernstein_default(s, k).map(Self).map_err(err)
    }

    #[getter]
    fn support(&self) -> &'static str {
        support_name(self.0.support())
    }

    #[getter]
    fn weights(&self) -> Option<Vec<f64>> {
        self.0.as_bernstein().map(|b| b.weights().to_vec())
    }

    fn forward(&self, z: f64) -> PyResult<f64> {
        self.0.forward(z).map_err(err)
    }

    fn deriv(&self, z: f64) -> PyResult<f64> {
        self.0.deriv(z).map_err(err)
    }

    fn inverse(&self, x: f64) -> PyResult<f64> {
        self.0.inverse(x).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }
}

/// Gaussian factor `(mu, C)` with one transform per coordinate.
#[pyclass(name = "State", module = "vgc", from_py_object)]
#[derive(Clone)]
struct PyState(VgcState);

#[pymethods]
impl PyState {
    /// `c` is the lower-triangular factor as square rows.
    #[new]
    fn new(mu: Vec<f64>, c: Vec<Vec<f64>>, transforms: Vec<PyTransform>) -> PyResult<Self> {
        let ts = transforms.into_iter().map(|t| t.0).collect();
        optimizer::state_from_parts(mu, &c, ts).map(Self).map_err(err)
    }

    /// Default starting point: `mu = 0` and a small diagonal factor.
    #[staticmethod]
    fn initial(transforms: Vec<PyTransform>) -> PyResult<Self> {
        VgcState::initial(transforms.into_iter().map(|t| t.0).collect()).map(Self).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text).map(Self).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn mu(&self) -> Vec<f64> {
        self.0.gauss().mu().to_vec()
    }

    #[getter]
    fn c(&self) -> Vec<Vec<f64>> {
        self.0.gauss().factor().to_dense()
    }

    #[getter]
    fn transforms(&self) -> Vec<PyTransform> {
        self.0.transforms().iter().cloned().map(PyTransform).collect()
    }

    fn correlation(&self) -> Vec<Vec<f64>> {
        self.0.correlation_of()
    }

    fn log_density(&self, x: Vec<f64>) -> PyResult<f64> {
        self.0.log_density(&x).map_err(err)
    }

    fn marginal_pdf(&self, j: usize, x: f64) -> PyResult<f64> {
        if j >= self.0.dim() {
            return Err(PyValueError::new_err(format!("coordinate {j} out of range")));
        }
        self.0.marginal_pdf(j, x).map_err(err)
    }

    /// `n` draws of `x` as rows.
    #[pyo3(signature = (n, seed = 0))]
    fn sample(&self, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let eps: Vec<f64> = (0..self.0.dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
                self.0.push_sample(&eps).map(|(_, x)| x).map_err(err)
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("State(dim={}, mu={:?})", self.0.dim(), self.0.gauss().mu())
    }
}

/// Unnormalized target density. Construct with the model keys, e.g.
/// `Model("gamma", shape=5.0, rate=2.0)`.
#[pyclass(name = "Model", module = "vgc")]
struct PyModel(Box<dyn TargetModel>);

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (target, **params))]
    fn new(py: Python<'_>, target: &str, params: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let d = PyDict::new(py);
        if let Some(p) = params {
            d.update(p.as_mapping())?;
        }
        d.set_item("target", target)?;
        let cfg: ModelConfig = from_kwargs(py, &d)?;
        build_model(&cfg).map(Self).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn supports(&self) -> Vec<&'static str> {
        self.0.supports().into_iter().map(support_name).collect()
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.0.coordinate_names()
    }

    fn log_joint(&self, x: Vec<f64>) -> PyResult<f64> {
        self.0.log_joint(&x).map_err(err)
    }

    fn grad(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.grad(&x).map_err(err)
    }

    fn log_normalizer(&self) -> Option<f64> {
        self.0.log_normalizer()
    }
}

/// Stochastic-gradient fit. Keyword arguments are optimizer settings
/// (`iterations`, `samples_per_iter`, `lambda`, `eta`, `xi`, `scheme`, `seed`,
/// ...). Returns `(state, trace, info)` with `trace` as
/// `(iter, elbo, std_error)` tuples.
#[pyfunction]
#[pyo3(signature = (model, state, **settings))]
fn fit<'py>(
    py: Python<'py>,
    model: &PyModel,
    state: &PyState,
    settings: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyTuple>> {
    let cfg: OptimizerConfig = match settings {
        Some(s) => from_kwargs(py, s)?,
        None => OptimizerConfig::default(),
    };
    let init = state.0.clone();
    let m = model.0.as_ref();
    let r = py.detach(|| optimizer::fit(m, init, &cfg)).map_err(err)?;
    let trace: Vec<(usize, f64, f64)> = r.trace.iter().map(|p| (p.iter, p.elbo, p.std_error)).collect();
    let info = PyDict::new(py);
    info.set_item("iterations", r.iterations)?;
    info.set_item("converged", r.converged)?;
    info.set_item("rejected", r.rejected)?;
    (PyState(r.state), trace, info).into_pyobject(py)
}

/// Monte Carlo ELBO `(value, std_error)`.
#[pyfunction]
#[pyo3(signature = (model, state, n = 10_000, seed = 0))]
fn elbo(py: Python<'_>, model: &PyModel, state: &PyState, n: usize, seed: u64) -> PyResult<(f64, f64)> {
    let m = model.0.as_ref();
    let s = &state.0;
    let e = py
        .detach(|| optimizer::elbo_estimate(s, m, n, &mut ChaCha8Rng::seed_from_u64(seed)))
        .map_err(err)?;
    Ok((e.value, e.std_error))
}

/// Euclidean projection onto the probability simplex.
#[pyfunction]
fn project_simplex(v: Vec<f64>) -> Vec<f64> {
    optimizer::project_simplex(&v)
}

/// Run an experiment as the `vgc` command does and return the summary.
/// `config` is TOML text.
#[pyfunction]
#[pyo3(signature = (experiment, config = "", seed = None, out = None, method = None, k = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    experiment: &str,
    config: &str,
    seed: Option<u64>,
    out: Option<std::path::PathBuf>,
    method: Option<&str>,
    k: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let experiment: Experiment = experiment.parse().map_err(err)?;
    let overrides = Overrides {
        seed,
        out,
        method: method.map(str::parse).transpose().map_err(err)?,
        k,
        scheme: None,
    };
    let cfg = ExperimentConfig::from_toml_str(config, experiment, &overrides).map_err(err)?;
    let summary = py.detach(|| run(&cfg)).map_err(err)?;
    to_python(py, &summary)
}

#[pymodule]
pub fn vgc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTransform>()?;
    m.add_class::<PyState>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(elbo, m)?)?;
    m.add_function(wrap_pyfunction!(project_simplex, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
