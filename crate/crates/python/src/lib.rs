//! Python bindings. Structured results cross the boundary as JSON and are
//! returned as plain dicts and lists.

use gaussmin::cli::{exit_code, EXIT_NUMERIC};
use gaussmin::estimators::{self, SmallBallMode};
use gaussmin::gauss_sim::{SamplerConfig, DEFAULT_BATCH};
use gaussmin::grid::Grid;
use gaussmin::kernels::{self, KernelSpec};
use gaussmin::measure::{self, GridMeasure};
use gaussmin::optimizer::{self, OptimalSolution, DEFAULT_TOL};
use gaussmin::{closedform, Error};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: Error) -> PyErr {
    if exit_code(&e) == EXIT_NUMERIC {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Covariance kernel.
#[pyclass(frozen, module = "gaussmin")]
struct Kernel {
    spec: KernelSpec,
    inner: kernels::Kernel,
}

fn build(spec: KernelSpec, interval: Option<(f64, f64)>) -> PyResult<Kernel> {
    let inner = spec.build(interval).map_err(err)?;
    Ok(Kernel { spec, inner })
}

#[pymethods]
impl Kernel {
    /// `exp(-|s-t|)`.
    #[staticmethod]
    fn ou() -> PyResult<Self> {
        build(KernelSpec::Ou, None)
    }

    /// `exp(-|s-t|^alpha)`.
    #[staticmethod]
    fn powerexp(alpha: f64) -> PyResult<Self> {
        build(KernelSpec::Powerexp { alpha }, None)
    }

    /// `B(t)/g(t)` with `g(t) = t^alpha` on `[a, b]`.
    #[staticmethod]
    fn modulated_bm_power(alpha: f64, a: f64, b: f64) -> PyResult<Self> {
        let g = kernels::ScaleFunction::power(alpha).map_err(err)?;
        build(KernelSpec::ModulatedBm { g, support: None }, Some((a, b)))
    }

    /// `B(t)/g(t)` with `g(t) = sqrt(t - c)` on `[a, b]`.
    #[staticmethod]
    fn modulated_bm_shifted_root(c: f64, a: f64, b: f64) -> PyResult<Self> {
        let g = kernels::ScaleFunction::shifted_root(c).map_err(err)?;
        build(KernelSpec::ModulatedBm { g, support: None }, Some((a, b)))
    }

    /// Explicit Gram matrix on `points` (default `0, 1, ..., n-1`).
    #[staticmethod]
    #[pyo3(signature = (matrix, points=None))]
    fn gram(matrix: Vec<Vec<f64>>, points: Option<Vec<f64>>) -> PyResult<Self> {
        build(KernelSpec::Gram { matrix, points }, None)
    }

    /// From the JSON kernel description used by CLI configs.
    #[staticmethod]
    #[pyo3(signature = (text, interval=None))]
    fn from_json(text: &str, interval: Option<(f64, f64)>) -> PyResult<Self> {
        let spec: KernelSpec = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        build(spec, interval)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.spec).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn evaluate(&self, s: f64, t: f64) -> PyResult<f64> {
        self.inner.evaluate(s, t).map_err(err)
    }

    /// Gram matrix on `points` as nested lists.
    fn gram_matrix(&self, points: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let grid = Grid::from_points(points).map_err(err)?;
        let m = self.inner.gram(&grid).map_err(err)?;
        Ok((0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect())
    }

    /// Point set of an explicit Gram kernel, `None` otherwise.
    fn points(&self) -> Option<Vec<f64>> {
        self.inner.natural_grid().map(|g| g.points().to_vec())
    }

    fn __repr__(&self) -> String {
        format!("Kernel({})", self.to_json().unwrap_or_default())
    }
}

/// Optimal probability weights on a finite grid.
#[pyclass(frozen, module = "gaussmin")]
struct Solution {
    inner: OptimalSolution,
}

#[pymethods]
impl Solution {
    #[getter]
    fn sigma_star_sq(&self) -> f64 {
        self.inner.sigma_star_sq
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn points(&self) -> Vec<f64> {
        self.inner.measure.grid().points().to_vec()
    }

    /// Mean vector `m = Σν`.
    #[getter]
    fn certificate(&self) -> Vec<f64> {
        self.inner.certificate.clone()
    }

    #[getter]
    fn support(&self) -> Vec<usize> {
        self.inner.support.clone()
    }

    #[getter]
    fn method(&self) -> String {
        format!("{:?}", self.inner.method)
    }

    /// Certificate report at relative tolerance `tol`.
    #[pyo3(signature = (tol=1e-6))]
    fn certify(&self, py: Python<'_>, tol: f64) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.report(tol))
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution(sigma_star_sq={}, points={}, support={})",
            self.inner.sigma_star_sq,
            self.inner.weights().len(),
            self.inner.support.len()
        )
    }
}

/// `2^level + 1` equally spaced points on `[a, b]`.
#[pyfunction]
fn dyadic_grid(a: f64, b: f64, level: u32) -> PyResult<Vec<f64>> {
    Ok(Grid::dyadic(a, b, level).map_err(err)?.points().to_vec())
}

fn grid_for(kernel: &Kernel, points: Option<Vec<f64>>) -> PyResult<Grid> {
    match (points, kernel.inner.natural_grid()) {
        (Some(p), _) => Grid::from_points(p).map_err(err),
        (None, Some(g)) => Ok(g),
        (None, None) => Err(PyValueError::new_err("points are required for this kernel")),
    }
}

/// Minimizes `νᵀΣν` over probability vectors on `points`.
#[pyfunction]
#[pyo3(signature = (kernel, points=None, tol=DEFAULT_TOL))]
fn solve(kernel: &Kernel, points: Option<Vec<f64>>, tol: f64) -> PyResult<Solution> {
    let grid = grid_for(kernel, points)?;
    let inner = optimizer::solve_on_grid(&kernel.inner, &grid, tol).map_err(err)?;
    Ok(Solution { inner })
}

/// Solves on dyadic grids `k_min..=k_max`; returns `[(k, σ²_k), ...]`.
#[pyfunction]
#[pyo3(signature = (kernel, a, b, k_min, k_max, stop_tol=0.0))]
fn refine(kernel: &Kernel, a: f64, b: f64, k_min: u32, k_max: u32, stop_tol: f64) -> PyResult<Vec<(Option<u32>, f64)>> {
    let trace = optimizer::refine(&kernel.inner, (a, b), k_min, k_max, stop_tol).map_err(err)?;
    Ok(trace.levels.iter().map(|l| (l.k, l.sigma_star_sq)).collect())
}

/// `2 / (2 + b - a)`.
#[pyfunction]
fn ou_sigma_star_sq(a: f64, b: f64) -> f64 {
    closedform::ou_sigma_star_sq(a, b)
}

/// Closed-form optimal measure for the ou and modulated Brownian kernels.
#[pyfunction]
fn analytic(py: Python<'_>, kernel: &Kernel, a: f64, b: f64) -> PyResult<Py<PyAny>> {
    to_py(py, &closedform::analytic(&kernel.inner, (a, b)).map_err(err)?)
}

/// The power-law measure `μ_α` on `[a, b]` (unnormalized, mean function 1).
#[pyfunction]
fn power_law_measure(py: Python<'_>, alpha: f64, a: f64, b: f64) -> PyResult<Py<PyAny>> {
    to_py(py, &closedform::power_law_measure(alpha, a, b).map_err(err)?)
}

#[pyfunction]
fn tv_distance(points: Vec<f64>, p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    let grid = Grid::from_points(points).map_err(err)?;
    let p = GridMeasure::from_unnormalized(grid.clone(), p).map_err(err)?;
    let q = GridMeasure::from_unnormalized(grid, q).map_err(err)?;
    measure::tv_distance(&p, &q).map_err(err)
}

fn sampler(seed: u64, n: usize, batch_size: usize, stream: u64) -> SamplerConfig {
    SamplerConfig {
        batch_size,
        stream,
        ..SamplerConfig::new(seed, n)
    }
}

/// Crude estimates of `P(min X > u)` for each `u`, from one set of paths.
#[pyfunction]
#[pyo3(signature = (kernel, us, seed, n, points=None, batch_size=DEFAULT_BATCH, stream=0))]
fn tail_crude(
    py: Python<'_>,
    kernel: &Kernel,
    us: Vec<f64>,
    seed: u64,
    n: usize,
    points: Option<Vec<f64>>,
    batch_size: usize,
    stream: u64,
) -> PyResult<Py<PyAny>> {
    let grid = grid_for(kernel, points)?;
    let cfg = sampler(seed, n, batch_size, stream);
    let est = py
        .detach(|| estimators::tail_crude_sweep(&kernel.inner, &grid, &us, &cfg))
        .map_err(err)?;
    to_py(py, &est)
}

/// Change-of-measure estimates of `P(min X > u)` for each `u`.
#[pyfunction]
#[pyo3(signature = (kernel, us, seed, n, points=None, batch_size=DEFAULT_BATCH, stream=0))]
fn tail_is(
    py: Python<'_>,
    kernel: &Kernel,
    us: Vec<f64>,
    seed: u64,
    n: usize,
    points: Option<Vec<f64>>,
    batch_size: usize,
    stream: u64,
) -> PyResult<Py<PyAny>> {
    let grid = grid_for(kernel, points)?;
    let cfg = sampler(seed, n, batch_size, stream);
    let est = py
        .detach(|| {
            let sol = optimizer::solve_on_grid(&kernel.inner, &grid, DEFAULT_TOL)?;
            estimators::tail_is_sweep(&kernel.inner, &grid, &sol, &us, &cfg)
        })
        .map_err(err)?;
    to_py(py, &est)
}

/// Small-ball probabilities; `mode` is `"range"` or `"zstar"`.
#[pyfunction]
#[pyo3(signature = (kernel, eps, seed, n, points=None, mode="range"))]
fn small_ball(
    py: Python<'_>,
    kernel: &Kernel,
    eps: Vec<f64>,
    seed: u64,
    n: usize,
    points: Option<Vec<f64>>,
    mode: &str,
) -> PyResult<Py<PyAny>> {
    let grid = grid_for(kernel, points)?;
    let cfg = SamplerConfig::new(seed, n);
    let est = py
        .detach(|| match mode {
            "range" => estimators::small_ball_sweep(&kernel.inner, &grid, &eps, &cfg, SmallBallMode::Range),
            "zstar" => {
                let sol = optimizer::solve_on_grid(&kernel.inner, &grid, DEFAULT_TOL)?;
                estimators::small_ball_sweep(&kernel.inner, &grid, &eps, &cfg, SmallBallMode::Zstar(&sol))
            }
            other => Err(Error::Config(format!("unknown small-ball mode {other:?}"))),
        })
        .map_err(err)?;
    to_py(py, &est)
}

/// `D(u) = log p(u) + u²/(2σ²)` over `us` and the fitted exponent.
#[pyfunction]
#[pyo3(signature = (kernel, us, seed, n, points=None))]
fn correction_diagnostic(
    py: Python<'_>,
    kernel: &Kernel,
    us: Vec<f64>,
    seed: u64,
    n: usize,
    points: Option<Vec<f64>>,
) -> PyResult<Py<PyAny>> {
    let grid = grid_for(kernel, points)?;
    let cfg = SamplerConfig::new(seed, n);
    let diag = py
        .detach(|| {
            let sol = optimizer::solve_on_grid(&kernel.inner, &grid, DEFAULT_TOL)?;
            estimators::correction_diagnostic(&kernel.inner, &grid, &sol, &us, &cfg)
        })
        .map_err(err)?;
    to_py(py, &diag)
}

/// Fits `ln(-D(u)) = β ln u + c` to given log-probabilities.
#[pyfunction]
fn fit_correction_exponent(py: Python<'_>, us: Vec<f64>, log_ps: Vec<f64>, sigma_sq: f64) -> PyResult<Py<PyAny>> {
    to_py(
        py,
        &estimators::fit_correction_exponent(&us, &log_ps, sigma_sq).map_err(err)?,
    )
}

/// Weighted histogram of the leftmost argmin given `min X > u`.
#[pyfunction]
#[pyo3(signature = (kernel, u, seed, n, points=None))]
fn argmin_conditional(
    py: Python<'_>,
    kernel: &Kernel,
    u: f64,
    seed: u64,
    n: usize,
    points: Option<Vec<f64>>,
) -> PyResult<Py<PyAny>> {
    let grid = grid_for(kernel, points)?;
    let cfg = SamplerConfig::new(seed, n);
    let hist = py
        .detach(|| {
            let sol = optimizer::solve_on_grid(&kernel.inner, &grid, DEFAULT_TOL)?;
            estimators::argmin_conditional(&kernel.inner, &grid, &sol, u, &cfg)
        })
        .map_err(err)?;
    to_py(py, &hist)
}

/// Argmin law given `Y <= x` and `min X > 0`, for each `x`.
#[pyfunction]
#[pyo3(signature = (kernel, xs, seed, n, points=None))]
fn mx_conditional(
    py: Python<'_>,
    kernel: &Kernel,
    xs: Vec<f64>,
    seed: u64,
    n: usize,
    points: Option<Vec<f64>>,
) -> PyResult<Py<PyAny>> {
    let grid = grid_for(kernel, points)?;
    let cfg = SamplerConfig::new(seed, n);
    let hists = py
        .detach(|| {
            let sol = optimizer::solve_on_grid(&kernel.inner, &grid, DEFAULT_TOL)?;
            estimators::mx_conditional_sweep(&kernel.inner, &grid, &sol, &xs, &cfg)
        })
        .map_err(err)?;
    to_py(py, &hists)
}

#[pymodule]
#[pyo3(name = "gaussmin")]
fn gaussmin_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Kernel>()?;
    m.add_class::<Solution>()?;
    m.add_function(wrap_pyfunction!(dyadic_grid, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(refine, m)?)?;
    m.add_function(wrap_pyfunction!(ou_sigma_star_sq, m)?)?;
    m.add_function(wrap_pyfunction!(analytic, m)?)?;
    m.add_function(wrap_pyfunction!(power_law_measure, m)?)?;
    m.add_function(wrap_pyfunction!(tv_distance, m)?)?;
    m.add_function(wrap_pyfunction!(tail_crude, m)?)?;
    m.add_function(wrap_pyfunction!(tail_is, m)?)?;
    m.add_function(wrap_pyfunction!(small_ball, m)?)?;
    m.add_function(wrap_pyfunction!(correction_diagnostic, m)?)?;
    m.add_function(wrap_pyfunction!(fit_correction_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(argmin_conditional, m)?)?;
    m.add_function(wrap_pyfunction!(mx_conditional, m)?)?;
    Ok(())
}
