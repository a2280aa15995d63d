//! Python bindings: model types, simulation, presets and the analytic checks.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use coevo_core::error::Error;
use coevo_core::integrate::{self, Scheme};
use coevo_core::models::{self, GrowthKind};
use coevo_core::scenarios::{self, Direction};
use coevo_core::verify::{self, Grid2, OdeMethod};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::NonFinite { .. } | Error::Quadrature(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Population growth model (logistic or Gompertz).
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct GrowthModel(models::GrowthModel);

#[pymethods]
impl GrowthModel {
    #[staticmethod]
    #[pyo3(signature = (K=1.0))]
    #[allow(non_snake_case)]
    fn logistic(K: f64) -> PyResult<Self> {
        let m = models::GrowthModel::logistic(K);
        m.validate().map_err(to_py)?;
        Ok(Self(m))
    }

    #[staticmethod]
    #[pyo3(signature = (K=1.0))]
    #[allow(non_snake_case)]
    fn gompertz(K: f64) -> PyResult<Self> {
        let m = models::GrowthModel::gompertz(K);
        m.validate().map_err(to_py)?;
        Ok(Self(m))
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.0.kind {
            GrowthKind::Logistic => "logistic",
            GrowthKind::Gompertz => "gompertz",
        }
    }

    #[getter(K)]
    fn k(&self) -> f64 {
        self.0.k
    }

    fn h(&self, x: f64) -> PyResult<f64> {
        self.0.h(x).map_err(to_py)
    }

    fn h_prime(&self, x: f64) -> PyResult<f64> {
        self.0.h_prime(x).map_err(to_py)
    }

    fn x_h_prime(&self, x: f64) -> PyResult<f64> {
        self.0.x_h_prime(x).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("GrowthModel.{}(K={})", self.kind(), self.0.k)
    }
}

/// Environment potential h*(y).
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct EnvironmentModel(models::EnvironmentModel);

#[pymethods]
impl EnvironmentModel {
    #[staticmethod]
    fn gaussian() -> Self {
        Self(models::EnvironmentModel::Gaussian)
    }

    #[staticmethod]
    fn symmetric(m: f64) -> PyResult<Self> {
        let e = models::EnvironmentModel::SymmetricBimodal { m };
        e.validate().map_err(to_py)?;
        Ok(Self(e))
    }

    #[staticmethod]
    #[allow(non_snake_case)]
    fn asymmetric(D: f64, a: f64) -> PyResult<Self> {
        let e = models::EnvironmentModel::AsymmetricBimodal { d: D, a };
        e.validate().map_err(to_py)?;
        Ok(Self(e))
    }

    fn h(&self, y: f64) -> f64 {
        self.0.h(y)
    }

    fn h_prime(&self, y: f64) -> f64 {
        self.0.h_prime(y)
    }

    fn __repr__(&self) -> String {
        format!("EnvironmentModel({:?})", self.0)
    }
}

/// Dependence of the carrying capacity on the environment.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct CouplingRule(models::CouplingRule);

#[pymethods]
impl CouplingRule {
    #[staticmethod]
    fn fixed() -> Self {
        Self(models::CouplingRule::Fixed)
    }

    #[staticmethod]
    #[pyo3(signature = (threshold, base=1.0, increment=1.0))]
    fn heaviside(threshold: f64, base: f64, increment: f64) -> PyResult<Self> {
        let r = models::CouplingRule::HeavisideShift {
            threshold,
            base,
            increment,
        };
        r.validate().map_err(to_py)?;
        Ok(Self(r))
    }

    fn effective_k(&self, fixed_k: f64, y: f64) -> f64 {
        self.0.effective_k(fixed_k, y)
    }

    fn __repr__(&self) -> String {
        format!("CouplingRule({:?})", self.0)
    }
}

/// Integration parameters; validated on construction.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct SimParams(integrate::SimParams);

#[pymethods]
impl SimParams {
    #[new]
    #[pyo3(signature = (
        *, lambda_=1.0, gamma=50.0, theta=0.001, dt=0.001, t_max=20.0, seed=0,
        x0=0.01, y0=0.0, record_stride=1, scheme="leimkuhler-matthews"
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        lambda_: f64,
        gamma: f64,
        theta: f64,
        dt: f64,
        t_max: f64,
        seed: u64,
        x0: f64,
        y0: f64,
        record_stride: u64,
        scheme: &str,
    ) -> PyResult<Self> {
        let scheme = match scheme {
            "leimkuhler-matthews" => Scheme::LeimkuhlerMatthews,
            "euler-maruyama" => Scheme::EulerMaruyama,
            other => return Err(PyValueError::new_err(format!("unknown scheme `{other}`"))),
        };
        let p = integrate::SimParams {
            lambda: lambda_,
            gamma,
            theta,
            dt,
            t_max,
            seed,
            x0,
            y0,
            record_stride,
            scheme,
        };
        p.validate().map_err(to_py)?;
        Ok(Self(p))
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.0.theta
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    /// λ²/γ, the deterministic growth rate in the strong-damping limit.
    fn rate(&self) -> Option<f64> {
        self.0.rate()
    }

    fn __repr__(&self) -> String {
        format!("SimParams({:?})", self.0)
    }
}

/// Recorded time series.
#[pyclass(frozen)]
struct Trajectory(integrate::Trajectory);

#[pymethods]
impl Trajectory {
    #[getter]
    fn t(&self) -> Vec<f64> {
        self.0.times.clone()
    }

    #[getter]
    fn x(&self) -> Vec<f64> {
        self.0.xs.clone()
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.0.ys.clone()
    }

    #[getter]
    fn stream(&self) -> u64 {
        self.0.stream
    }

    fn to_csv(&self) -> String {
        coevo_core::cli::trajectory_csv(&self.0)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Histogram-vs-density comparison.
#[pyclass(frozen, get_all)]
struct DensityReport {
    edges: Vec<f64>,
    empirical: Vec<f64>,
    theoretical: Vec<f64>,
    l1_distance: f64,
    ks_distance: f64,
}

impl From<verify::DensityReport> for DensityReport {
    fn from(r: verify::DensityReport) -> Self {
        Self {
            edges: r.histogram.edges,
            empirical: r.histogram.densities,
            theoretical: r.theoretical,
            l1_distance: r.l1_distance,
            ks_distance: r.ks_distance,
        }
    }
}

/// Summary of a preset run.
#[pyclass(frozen)]
struct ScenarioReport(scenarios::ScenarioReport);

#[pymethods]
impl ScenarioReport {
    #[getter]
    fn name(&self) -> String {
        self.0.spec.name.clone()
    }

    #[getter]
    fn runs(&self) -> usize {
        self.0.runs.len()
    }

    #[getter]
    fn comparison_gap(&self) -> Option<f64> {
        self.0.comparison_gap
    }

    #[getter]
    fn ensemble_mean(&self) -> Vec<f64> {
        self.0.ensemble_mean.clone()
    }

    #[getter]
    fn final_window_means(&self) -> Vec<f64> {
        self.0.runs.iter().map(|r| r.final_window_mean).collect()
    }

    #[getter]
    fn sync_fractions(&self) -> Vec<Option<f64>> {
        self.0.runs.iter().map(|r| r.sync_fraction).collect()
    }

    /// Per run, a list of `(time, "up" | "down")`.
    #[getter]
    fn transitions(&self) -> Vec<Vec<(f64, &'static str)>> {
        self.0
            .runs
            .iter()
            .map(|r| {
                r.transitions
                    .iter()
                    .map(|t| {
                        let d = match t.direction {
                            Direction::Up => "up",
                            Direction::Down => "down",
                        };
                        (t.time, d)
                    })
                    .collect()
            })
            .collect()
    }

    #[getter]
    fn density(&self) -> Option<DensityReport> {
        self.0.density.clone().map(Into::into)
    }

    fn trajectory(&self, run: usize) -> PyResult<Trajectory> {
        self.0
            .runs
            .get(run)
            .map(|r| Trajectory(r.trajectory.clone()))
            .ok_or_else(|| PyValueError::new_err(format!("run {run} out of range")))
    }

    fn spec_json(&self) -> String {
        serde_json::to_string(&self.0.spec).expect("serializable")
    }
}

#[pyfunction]
#[pyo3(signature = (model, env, rule, params, stream=0))]
fn simulate(
    py: Python<'_>,
    model: GrowthModel,
    env: EnvironmentModel,
    rule: CouplingRule,
    params: SimParams,
    stream: u64,
) -> PyResult<Trajectory> {
    py.detach(|| integrate::simulate_stream(&model.0, &env.0, &rule.0, &params.0, stream))
        .map(Trajectory)
        .map_err(to_py)
}

#[pyfunction]
fn ensemble(
    py: Python<'_>,
    model: GrowthModel,
    env: EnvironmentModel,
    rule: CouplingRule,
    params: SimParams,
    n_runs: usize,
) -> PyResult<Vec<Trajectory>> {
    py.detach(|| integrate::ensemble(&model.0, &env.0, &rule.0, &params.0, n_runs))
        .map(|v| v.into_iter().map(Trajectory).collect())
        .map_err(to_py)
}

#[pyfunction]
fn preset_names() -> Vec<&'static str> {
    scenarios::PRESET_NAMES.to_vec()
}

/// Run a named preset; `t_max` and `runs` optionally shorten it.
#[pyfunction]
#[pyo3(signature = (name, seed=None, t_max=None, runs=None))]
fn run_scenario(
    py: Python<'_>,
    name: &str,
    seed: Option<u64>,
    t_max: Option<f64>,
    runs: Option<usize>,
) -> PyResult<ScenarioReport> {
    let mut spec = scenarios::preset(name).map_err(to_py)?;
    if let Some(t) = t_max {
        spec.params.t_max = t;
    }
    if let Some(r) = runs {
        spec.runs = r;
    }
    py.detach(|| scenarios::run_scenario(&spec, seed))
        .map(ScenarioReport)
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (samples, model, theta, bins=50, range=(0.0, 4.0), burn_in=0.1))]
fn compare_density(
    samples: Vec<f64>,
    model: GrowthModel,
    theta: f64,
    bins: usize,
    range: (f64, f64),
    burn_in: f64,
) -> PyResult<DensityReport> {
    verify::compare_density(&samples, &model.0, theta, bins, range, burn_in)
        .map(Into::into)
        .map_err(to_py)
}

/// Max relative Fokker–Planck residual of the product density on a grid.
#[pyfunction]
#[pyo3(signature = (model, env, theta, lambda_, gamma, x_range=(0.05, 4.0), y_range=(-3.0, 3.0), n=101))]
#[allow(clippy::too_many_arguments)]
fn fp_residual(
    model: GrowthModel,
    env: EnvironmentModel,
    theta: f64,
    lambda_: f64,
    gamma: f64,
    x_range: (f64, f64),
    y_range: (f64, f64),
    n: usize,
) -> PyResult<f64> {
    let grid = Grid2::uniform(x_range, n, y_range, n);
    verify::fp_residual(&model.0, &env.0, theta, lambda_, gamma, &grid).map_err(to_py)
}

/// Max |I(t) - I(0)| along a noise-free, undamped RK4 (or Euler) run.
#[pyfunction]
#[pyo3(signature = (model, env, theta, lambda_, x0, y0, dt, t_max, method="rk4"))]
#[allow(clippy::too_many_arguments)]
fn conservation_check(
    model: GrowthModel,
    env: EnvironmentModel,
    theta: f64,
    lambda_: f64,
    x0: f64,
    y0: f64,
    dt: f64,
    t_max: f64,
    method: &str,
) -> PyResult<f64> {
    let method = match method {
        "rk4" => OdeMethod::Rk4,
        "euler" => OdeMethod::Euler,
        other => return Err(PyValueError::new_err(format!("unknown method `{other}`"))),
    };
    verify::conservation_check(&model.0, &env.0, theta, lambda_, x0, y0, dt, t_max, method)
        .map_err(to_py)
}

#[pyfunction]
fn hermite(n: u32, y: f64, theta: f64) -> f64 {
    models::hermite(n, y, theta)
}

#[pyfunction]
fn theta_population(model: GrowthModel, x: f64, theta: f64) -> PyResult<f64> {
    models::theta_population(&model.0, x, theta).map_err(to_py)
}

#[pyfunction]
fn integral_of_motion(model: GrowthModel, env: EnvironmentModel, x: f64, y: f64, theta: f64) -> PyResult<f64> {
    models::integral_of_motion(&model.0, &env.0, x, y, theta).map_err(to_py)
}

#[pymodule]
fn coevo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<GrowthModel>()?;
    m.add_class::<EnvironmentModel>()?;
    m.add_class::<CouplingRule>()?;
    m.add_class::<SimParams>()?;
    m.add_class::<Trajectory>()?;
    m.add_class::<DensityReport>()?;
    m.add_class::<ScenarioReport>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(compare_density, m)?)?;
    m.add_function(wrap_pyfunction!(fp_residual, m)?)?;
    m.add_function(wrap_pyfunction!(conservation_check, m)?)?;
    m.add_function(wrap_pyfunction!(hermite, m)?)?;
    m.add_function(wrap_pyfunction!(theta_population, m)?)?;
    m.add_function(wrap_pyfunction!(integral_of_motion, m)?)?;
    Ok(())
}
