//! Python bindings: simulation, quadratic variations, calibration and
//! reaction-function fits.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use spde_calib::basis::BasisSpec;
use spde_calib::grid::{GridShape, ObservationGrid};
use spde_calib::nonparametric;
use spde_calib::simulator::{self, InitialCondition, ModelSpec, Polynomial, SimConfig};
use spde_calib::spectral;
use spde_calib::variation::{self, CompactSet};
use spde_calib::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Divergence { .. } | Error::Io(_) | Error::Resource(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Field values `X_{t_i}(y_k)` on a regular space-time grid.
#[pyclass(name = "ObservationGrid", module = "spde_calib", frozen)]
struct PyGrid {
    inner: ObservationGrid,
}

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (values, t, b=0.0))]
    fn new(values: Vec<Vec<f64>>, t: f64, b: f64) -> PyResult<Self> {
        Ok(Self {
            inner: ObservationGrid::from_rows(values, t, b).map_err(to_py)?,
        })
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.shape.m
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.shape.n
    }

    #[getter]
    fn t(&self) -> f64 {
        self.inner.shape.t
    }

    #[getter]
    fn b(&self) -> f64 {
        self.inner.shape.b
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.shape.delta()
    }

    #[getter]
    fn big_delta(&self) -> f64 {
        self.inner.shape.big_delta()
    }

    #[getter]
    fn zero_init(&self) -> bool {
        self.inner.zero_init
    }

    /// Rows `i = 0..=N`, each with `M + 1` values.
    #[getter]
    fn values(&self) -> Vec<Vec<f64>> {
        self.inner.values.rows().into_iter().map(|r| r.to_vec()).collect()
    }

    fn locations(&self) -> Vec<f64> {
        self.inner.shape.locations()
    }

    fn sample_observations(&self, b: f64, m: usize, n: usize) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.sample_observations(b, m, n).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json(None, None).map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ObservationGrid::from_json(text).map_err(to_py)?,
        })
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_csv(&mut buf).map_err(to_py)?;
        String::from_utf8(buf).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ObservationGrid::read_csv(std::io::Cursor::new(text.as_bytes())).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        let s = &self.inner.shape;
        format!("ObservationGrid(M={}, N={}, T={}, b={})", s.m, s.n, s.t, s.b)
    }
}

/// Joint `(sigma^2, theta)` estimate.
#[pyclass(name = "ParamEstimate", module = "spde_calib", frozen, get_all)]
struct PyEstimate {
    sigma2_hat: f64,
    theta_hat: f64,
    method: String,
    clamped: bool,
    v1: f64,
    v2: f64,
    r: f64,
}

#[pymethods]
impl PyEstimate {
    fn __repr__(&self) -> String {
        format!(
            "ParamEstimate(sigma2_hat={}, theta_hat={}, method={}, clamped={})",
            self.sigma2_hat, self.theta_hat, self.method, self.clamped
        )
    }
}

/// Fitted reaction function.
#[pyclass(name = "ReactionFit", module = "spde_calib", frozen)]
struct PyFit {
    inner: nonparametric::ReactionFit,
}

#[pymethods]
impl PyFit {
    #[getter]
    fn coefficients(&self) -> Vec<f64> {
        self.inner.coefficients.clone()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.basis.dimension()
    }

    #[getter]
    fn m_hat(&self) -> Option<usize> {
        self.inner.m_hat
    }

    fn __call__(&self, x: f64) -> f64 {
        self.inner.eval_truncated(x)
    }

    fn curve(&self, points: usize) -> Vec<(f64, f64)> {
        self.inner.curve(points)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

fn parse_init(init: &str, t_burn: Option<f64>) -> PyResult<InitialCondition> {
    match init {
        "zero" => Ok(InitialCondition::Zero),
        "stationary" | "stationary_linear" => Ok(InitialCondition::StationaryLinear),
        "burn_in" => Ok(InitialCondition::BurnIn { t_burn }),
        other => Err(PyValueError::new_err(format!(
            "init must be 'zero', 'stationary' or 'burn_in', got '{other}'"
        ))),
    }
}

/// Simulates the equation on the grid `(M, N, T, b)`.
#[pyfunction]
#[pyo3(signature = (theta, sigma, m, n, t, b=0.0, reaction=None, init="stationary", t_burn=None, seed=0, cutoff=None, substeps=None, tail_compensation=true))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    theta: f64,
    sigma: f64,
    m: usize,
    n: usize,
    t: f64,
    b: f64,
    reaction: Option<Vec<f64>>,
    init: &str,
    t_burn: Option<f64>,
    seed: u64,
    cutoff: Option<usize>,
    substeps: Option<usize>,
    tail_compensation: bool,
) -> PyResult<PyGrid> {
    let model = ModelSpec::linear(theta, sigma)
        .with_reaction(Polynomial::new(reaction.unwrap_or_default()))
        .with_init(parse_init(init, t_burn)?);
    let shape = GridShape::new(m, n, t, b).map_err(to_py)?;
    let cfg = SimConfig {
        cutoff,
        substeps,
        seed,
        tail_compensation,
        ..SimConfig::default()
    };
    let sim = py
        .detach(|| simulator::simulate(&model, &shape, &cfg))
        .map_err(to_py)?;
    Ok(PyGrid { inner: sim.grid })
}

#[pyfunction]
fn rqv_time(grid: &PyGrid) -> PyResult<f64> {
    Ok(variation::rqv_time(&grid.inner).map_err(to_py)?.value)
}

#[pyfunction]
fn rqv_space(grid: &PyGrid) -> PyResult<f64> {
    Ok(variation::rqv_space(&grid.inner).map_err(to_py)?.value)
}

#[pyfunction]
fn rqv_double(grid: &PyGrid, theta: f64) -> PyResult<f64> {
    Ok(variation::rqv_double(&grid.inner, theta).map_err(to_py)?.value)
}

#[pyfunction]
fn rqv_double_balanced(grid: &PyGrid, r: f64) -> PyResult<f64> {
    Ok(variation::rqv_double_balanced(&grid.inner, r).map_err(to_py)?.value)
}

#[pyfunction]
fn subsampled_v(grid: &PyGrid, nu: usize, v: usize, w: usize) -> PyResult<f64> {
    Ok(variation::subsampled_v(&grid.inner, nu, v, w).map_err(to_py)?.value)
}

#[pyfunction]
fn choose_subsampling(delta: f64, big_delta: f64) -> (usize, usize, f64) {
    variation::choose_subsampling(delta, big_delta)
}

#[pyfunction]
#[pyo3(signature = (grid, sigma2_range=(1e-6, 1e2), theta_range=(1e-6, 1e2)))]
fn joint_estimate(grid: &PyGrid, sigma2_range: (f64, f64), theta_range: (f64, f64)) -> PyResult<PyEstimate> {
    let h = CompactSet {
        sigma2: sigma2_range,
        theta: theta_range,
    };
    let e = variation::joint_estimate(&grid.inner, &h).map_err(to_py)?;
    Ok(PyEstimate {
        sigma2_hat: e.sigma2_hat,
        theta_hat: e.theta_hat,
        method: serde_json::to_value(e.method)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default(),
        clamped: e.clamped,
        v1: e.v1,
        v2: e.v2,
        r: e.r,
    })
}

fn parse_basis(basis: &str) -> PyResult<BasisSpec> {
    serde_json::from_str(basis).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Least-squares fit of `f` over the space described by the JSON `basis`,
/// e.g. `{"family": "trig", "m": 7, "a": 1.0}`.
#[pyfunction]
#[pyo3(signature = (grid, theta, basis, truncation=None))]
fn fit_reaction(grid: &PyGrid, theta: f64, basis: &str, truncation: Option<f64>) -> PyResult<PyFit> {
    let spec = parse_basis(basis)?;
    let data = nonparametric::build_responses(&grid.inner, theta).map_err(to_py)?;
    let mut fit = nonparametric::fit_fm(&data, &spec).map_err(to_py)?;
    if let Some(bound) = truncation {
        fit = nonparametric::truncate(&fit, bound).map_err(to_py)?;
    }
    Ok(PyFit { inner: fit })
}

/// Penalized selection over trigonometric spaces with the given dimensions.
#[pyfunction]
#[pyo3(signature = (grid, theta, dimensions, a=1.0, kappa=2.0, sigma2=None))]
fn select_reaction(
    grid: &PyGrid,
    theta: f64,
    dimensions: Vec<usize>,
    a: f64,
    kappa: f64,
    sigma2: Option<f64>,
) -> PyResult<PyFit> {
    let specs = dimensions
        .iter()
        .map(|&d| BasisSpec::trig_with_dimension(d, a))
        .collect::<Result<Vec<_>, _>>()
        .map_err(to_py)?;
    let data = nonparametric::build_responses(&grid.inner, theta).map_err(to_py)?;
    let s2 = match sigma2 {
        Some(s) => s,
        None => nonparametric::default_sigma2(&grid.inner, theta).map_err(to_py)?,
    };
    let fit = nonparametric::select_model(&data, &specs, kappa, s2).map_err(to_py)?;
    Ok(PyFit { inner: fit })
}

#[pyfunction]
fn eigenvalue(theta: f64, ell: usize) -> PyResult<f64> {
    spectral::eigenvalue(theta, ell).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (theta, delta, big_delta, tol=1e-12))]
fn phi_theta(theta: f64, delta: f64, big_delta: f64, tol: f64) -> PyResult<f64> {
    spectral::phi_theta(theta, delta, big_delta, tol).map_err(to_py)
}

#[pyfunction]
fn psi_theta(theta: f64, r: f64) -> PyResult<f64> {
    spectral::psi_theta(theta, r).map_err(to_py)
}

#[pyfunction]
fn invert_g(r: f64, ratio: f64) -> PyResult<f64> {
    spectral::invert_g(r, ratio).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (tol=1e-10))]
fn variance_constant_b(tol: f64) -> PyResult<f64> {
    spectral::variance_constant_b(tol).map_err(to_py)
}

#[pymodule(name = "spde_calib")]
fn spde_calib_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyEstimate>()?;
    m.add_class::<PyFit>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(rqv_time, m)?)?;
    m.add_function(wrap_pyfunction!(rqv_space, m)?)?;
    m.add_function(wrap_pyfunction!(rqv_double, m)?)?;
    m.add_function(wrap_pyfunction!(rqv_double_balanced, m)?)?;
    m.add_function(wrap_pyfunction!(subsampled_v, m)?)?;
    m.add_function(wrap_pyfunction!(choose_subsampling, m)?)?;
    m.add_function(wrap_pyfunction!(joint_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_reaction, m)?)?;
    m.add_function(wrap_pyfunction!(select_reaction, m)?)?;
    m.add_function(wrap_pyfunction!(eigenvalue, m)?)?;
    m.add_function(wrap_pyfunction!(phi_theta, m)?)?;
    m.add_function(wrap_pyfunction!(psi_theta, m)?)?;
    m.add_function(wrap_pyfunction!(invert_g, m)?)?;
    m.add_function(wrap_pyfunction!(variance_constant_b, m)?)?;
    Ok(())
}
