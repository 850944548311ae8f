//! Python bindings: `import mimo_capacity`.
//!
//! Matrices cross the boundary as nested lists of complex numbers (row
//! major), so `numpy.asarray` works on every returned matrix.

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use mimo_capacity as core;
use mimo_capacity::config::{sigma2_to_snr, snr_to_sigma2};
use mimo_capacity::matrix::{ComplexMatrix, HermitianMatrix};
use mimo_capacity::optimizer::OptimizerSettings;

create_exception!(mimo_capacity, NonConvergenceError, PyRuntimeError);

fn to_py_err(e: core::Error) -> PyErr {
    if e.is_numerical_non_convergence() {
        NonConvergenceError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn to_rows(m: &ComplexMatrix) -> Vec<Vec<Complex64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn from_rows(rows: Vec<Vec<Complex64>>) -> PyResult<ComplexMatrix> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("expected a non-empty square matrix"));
    }
    Ok(ComplexMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Second-order statistics of a multipath Kronecker channel.
#[pyclass(name = "ChannelStats", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyChannelStats {
    inner: core::ChannelStats,
}

#[pymethods]
impl PyChannelStats {
    /// Clusters given as `(mean_aod, aod_spread, mean_aoa, aoa_spread, power)`.
    #[staticmethod]
    fn from_clusters(clusters: Vec<(f64, f64, f64, f64, f64)>, r: usize, t: usize, sigma2: f64) -> PyResult<Self> {
        let clusters: Vec<core::PathCluster> = clusters
            .into_iter()
            .map(|(mean_aod, aod_spread, mean_aoa, aoa_spread, power)| core::PathCluster {
                mean_aod,
                aod_spread,
                mean_aoa,
                aoa_spread,
                power,
            })
            .collect();
        let inner = core::build_stats(&clusters, r, t, sigma2).map_err(to_py_err)?;
        Ok(PyChannelStats { inner })
    }

    /// The five equal-power reference clusters.
    #[staticmethod]
    fn reference(r: usize, t: usize, sigma2: f64) -> PyResult<Self> {
        let inner = core::build_stats(&core::channel::reference_clusters(), r, t, sigma2).map_err(to_py_err)?;
        Ok(PyChannelStats { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (r, t, paths=1, sigma2=1.0))]
    fn isotropic(r: usize, t: usize, paths: usize, sigma2: f64) -> PyResult<Self> {
        let inner = core::ChannelStats::isotropic(r, t, paths, sigma2).map_err(to_py_err)?;
        Ok(PyChannelStats { inner })
    }

    fn with_sigma2(&self, sigma2: f64) -> PyResult<Self> {
        let inner = self.inner.with_sigma2(sigma2).map_err(to_py_err)?;
        Ok(PyChannelStats { inner })
    }

    #[getter]
    fn r(&self) -> usize {
        self.inner.r()
    }

    #[getter]
    fn t(&self) -> usize {
        self.inner.t()
    }

    #[getter]
    fn num_paths(&self) -> usize {
        self.inner.num_paths()
    }

    #[getter]
    fn sigma2(&self) -> f64 {
        self.inner.sigma2()
    }

    fn receive(&self, path: usize) -> PyResult<Vec<Vec<Complex64>>> {
        self.check_path(path)?;
        Ok(to_rows(self.inner.receive(path).as_matrix()))
    }

    fn transmit(&self, path: usize) -> PyResult<Vec<Vec<Complex64>>> {
        self.check_path(path)?;
        Ok(to_rows(self.inner.transmit(path).as_matrix()))
    }

    /// One channel draw `H` (r x t).
    fn sample(&self, seed: u64) -> Vec<Vec<Complex64>> {
        to_rows(&core::sample_channel(&self.inner, seed).h)
    }

    fn __repr__(&self) -> String {
        format!(
            "ChannelStats(r={}, t={}, paths={}, sigma2={})",
            self.inner.r(),
            self.inner.t(),
            self.inner.num_paths(),
            self.inner.sigma2()
        )
    }
}

impl PyChannelStats {
    fn check_path(&self, path: usize) -> PyResult<()> {
        if path >= self.inner.num_paths() {
            return Err(PyValueError::new_err(format!(
                "path index {path} out of range for {} paths",
                self.inner.num_paths()
            )));
        }
        Ok(())
    }
}

/// Input covariance with `(1/t) Tr Q = 1`.
#[pyclass(name = "Covariance", frozen, from_py_object)]
#[derive(Clone)]
struct PyCovariance {
    inner: core::CovarianceMatrix,
}

#[pymethods]
impl PyCovariance {
    /// Validates a Hermitian PSD matrix with normalized trace.
    #[new]
    fn new(rows: Vec<Vec<Complex64>>) -> PyResult<Self> {
        let m = HermitianMatrix::new(from_rows(rows)?).map_err(to_py_err)?;
        let inner = core::CovarianceMatrix::new(m).map_err(to_py_err)?;
        Ok(PyCovariance { inner })
    }

    #[staticmethod]
    fn identity(t: usize) -> Self {
        PyCovariance {
            inner: core::CovarianceMatrix::identity(t),
        }
    }

    #[staticmethod]
    fn random(t: usize, seed: u64) -> Self {
        PyCovariance {
            inner: core::CovarianceMatrix::random(t, seed),
        }
    }

    /// Rescales a nonzero PSD matrix to unit normalized trace.
    #[staticmethod]
    fn normalized(rows: Vec<Vec<Complex64>>) -> PyResult<Self> {
        let m = HermitianMatrix::new(from_rows(rows)?).map_err(to_py_err)?;
        let inner = core::CovarianceMatrix::normalized(m).map_err(to_py_err)?;
        Ok(PyCovariance { inner })
    }

    #[getter]
    fn t(&self) -> usize {
        self.inner.t()
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues().to_vec()
    }

    fn matrix(&self) -> Vec<Vec<Complex64>> {
        to_rows(self.inner.matrix().as_matrix())
    }

    fn __repr__(&self) -> String {
        format!("Covariance(t={}, eigenvalues={:?})", self.inner.t(), self.inner.eigenvalues())
    }
}

#[pyclass(name = "CanonicalSolution", frozen, get_all)]
struct PyCanonicalSolution {
    delta: Vec<f64>,
    delta_tilde: Vec<f64>,
    iterations: usize,
    residual: f64,
    lemma1_rho: f64,
}

#[pymethods]
impl PyCanonicalSolution {
    fn __repr__(&self) -> String {
        format!(
            "CanonicalSolution(delta={:?}, delta_tilde={:?}, iterations={}, residual={:e})",
            self.delta, self.delta_tilde, self.iterations, self.residual
        )
    }
}

#[pyclass(name = "EmiEstimate", frozen, get_all)]
struct PyEmiEstimate {
    mean: f64,
    std_err: f64,
    trials: usize,
    seed: u64,
}

#[pymethods]
impl PyEmiEstimate {
    fn __repr__(&self) -> String {
        format!("EmiEstimate(mean={}, std_err={}, trials={})", self.mean, self.std_err, self.trials)
    }
}

#[pyclass(name = "WaterfillResult", frozen, get_all)]
struct PyWaterfillResult {
    q: PyCovariance,
    water_level: f64,
    active_count: usize,
    gains: Vec<f64>,
    powers: Vec<f64>,
}

#[pyclass(name = "OptimizeReport", frozen, get_all)]
struct PyOptimizeReport {
    q_star: PyCovariance,
    emi_approx_value: f64,
    outer_iterations: usize,
    delta_history_residuals: Vec<f64>,
    converged: bool,
    restarts: usize,
    monotone: bool,
    delta: Vec<f64>,
    delta_tilde: Vec<f64>,
}

#[pymethods]
impl PyOptimizeReport {
    fn __repr__(&self) -> String {
        format!(
            "OptimizeReport(emi_approx_value={}, outer_iterations={}, restarts={})",
            self.emi_approx_value, self.outer_iterations, self.restarts
        )
    }
}

impl From<core::OptimizeReport> for PyOptimizeReport {
    fn from(r: core::OptimizeReport) -> Self {
        PyOptimizeReport {
            q_star: PyCovariance { inner: r.q_star },
            emi_approx_value: r.emi_approx_value,
            outer_iterations: r.outer_iterations,
            delta_history_residuals: r.delta_history_residuals,
            converged: r.converged,
            restarts: r.restarts,
            monotone: r.monotone,
            delta: r.solution.delta,
            delta_tilde: r.solution.delta_tilde,
        }
    }
}

fn covariance_or_identity(stats: &PyChannelStats, q: Option<&PyCovariance>) -> core::CovarianceMatrix {
    q.map_or_else(|| core::CovarianceMatrix::identity(stats.inner.t()), |q| q.inner.clone())
}

fn solver(tol: f64, max_iter: usize) -> core::SolverOptions {
    core::SolverOptions {
        tol,
        max_iter,
        ..core::SolverOptions::default()
    }
}

/// Solves the canonical equations at `q` (identity by default).
#[pyfunction]
#[pyo3(signature = (stats, q=None, tol=1e-10, max_iter=10_000))]
fn solve_canonical(
    py: Python<'_>,
    stats: &PyChannelStats,
    q: Option<&PyCovariance>,
    tol: f64,
    max_iter: usize,
) -> PyResult<PyCanonicalSolution> {
    let q = covariance_or_identity(stats, q);
    let opts = solver(tol, max_iter);
    let (sol, rho) = py
        .detach(|| {
            let sol = core::solve_canonical(&stats.inner, &q, &opts)?;
            let rho = core::lemma1_diagnostic(&sol, &stats.inner, &q);
            Ok::<_, core::Error>((sol, rho))
        })
        .map_err(to_py_err)?;
    Ok(PyCanonicalSolution {
        delta: sol.delta,
        delta_tilde: sol.delta_tilde,
        iterations: sol.iterations,
        residual: sol.residual,
        lemma1_rho: rho,
    })
}

/// Large-system approximation of the ergodic mutual information, in nats.
#[pyfunction]
#[pyo3(signature = (stats, q=None, tol=1e-10))]
fn emi_approx(py: Python<'_>, stats: &PyChannelStats, q: Option<&PyCovariance>, tol: f64) -> PyResult<f64> {
    let q = covariance_or_identity(stats, q);
    py.detach(|| core::emi_approx(&stats.inner, &q, &solver(tol, 10_000)))
        .map(|v| v.value)
        .map_err(to_py_err)
}

/// Monte-Carlo estimate of the ergodic mutual information, in nats.
#[pyfunction]
#[pyo3(signature = (stats, q=None, trials=100_000, seed=0))]
fn emi_mc(
    py: Python<'_>,
    stats: &PyChannelStats,
    q: Option<&PyCovariance>,
    trials: usize,
    seed: u64,
) -> PyResult<PyEmiEstimate> {
    let q = covariance_or_identity(stats, q);
    let est = py
        .detach(|| core::emi_mc(&stats.inner, &q, trials, seed))
        .map_err(to_py_err)?;
    Ok(PyEmiEstimate {
        mean: est.mean,
        std_err: est.std_err,
        trials: est.trials,
        seed: est.seed,
    })
}

/// Maximizes `log|I + Q C~|` over unit normalized-trace covariances.
#[pyfunction]
fn waterfill(c_tilde: Vec<Vec<Complex64>>) -> PyResult<PyWaterfillResult> {
    let m = HermitianMatrix::new(from_rows(c_tilde)?).map_err(to_py_err)?;
    let t = m.dim();
    let wf = core::waterfill(&m, t).map_err(to_py_err)?;
    Ok(PyWaterfillResult {
        q: PyCovariance { inner: wf.q },
        water_level: wf.water_level,
        active_count: wf.active_count,
        gains: wf.gains,
        powers: wf.powers,
    })
}

/// Iterative waterfilling from `Q = I`, with up to `restarts` restarts.
#[pyfunction]
#[pyo3(signature = (stats, outer_tol=1e-8, max_outer=100, tol=1e-10, restarts=3))]
fn optimize(
    py: Python<'_>,
    stats: &PyChannelStats,
    outer_tol: f64,
    max_outer: usize,
    tol: f64,
    restarts: usize,
) -> PyResult<PyOptimizeReport> {
    let settings = OptimizerSettings {
        outer_tol,
        max_outer,
        solver: solver(tol, 10_000),
    };
    py.detach(|| core::optimizer::optimize_with_restarts(&stats.inner, &settings, restarts))
        .map(Into::into)
        .map_err(to_py_err)
}

/// Projected-gradient maximizer of the approximation (independent check).
#[pyfunction]
#[pyo3(signature = (stats, tol=1e-7))]
fn reference_maximizer(py: Python<'_>, stats: &PyChannelStats, tol: f64) -> PyResult<PyOptimizeReport> {
    py.detach(|| core::reference_maximizer(&stats.inner, tol))
        .map(Into::into)
        .map_err(to_py_err)
}

/// Largest Gateaux derivative of the approximation at `q` over `directions`.
#[pyfunction]
fn max_directional_derivative(
    py: Python<'_>,
    stats: &PyChannelStats,
    q: &PyCovariance,
    directions: Vec<PyRef<'_, PyCovariance>>,
) -> PyResult<f64> {
    let dirs: Vec<core::CovarianceMatrix> = directions.iter().map(|d| d.inner.clone()).collect();
    let q = q.inner.clone();
    py.detach(|| {
        let sol = core::solve_canonical(&stats.inner, &q, &core::SolverOptions::default())?;
        Ok(core::optimizer::max_directional_derivative(&stats.inner, &q, &sol.delta, &dirs))
    })
    .map_err(to_py_err)
}

#[pyfunction(name = "snr_to_sigma2")]
fn py_snr_to_sigma2(snr_db: f64) -> f64 {
    snr_to_sigma2(snr_db)
}

#[pyfunction(name = "sigma2_to_snr")]
fn py_sigma2_to_snr(sigma2: f64) -> f64 {
    sigma2_to_snr(sigma2)
}

#[pymodule]
#[pyo3(name = "mimo_capacity")]
fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NonConvergenceError", m.py().get_type::<NonConvergenceError>())?;
    m.add_class::<PyChannelStats>()?;
    m.add_class::<PyCovariance>()?;
    m.add_class::<PyCanonicalSolution>()?;
    m.add_class::<PyEmiEstimate>()?;
    m.add_class::<PyWaterfillResult>()?;
    m.add_class::<PyOptimizeReport>()?;
    m.add_function(wrap_pyfunction!(solve_canonical, m)?)?;
    m.add_function(wrap_pyfunction!(emi_approx, m)?)?;
    m.add_function(wrap_pyfunction!(emi_mc, m)?)?;
    m.add_function(wrap_pyfunction!(waterfill, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(reference_maximizer, m)?)?;
    m.add_function(wrap_pyfunction!(max_directional_derivative, m)?)?;
    m.add_function(wrap_pyfunction!(py_snr_to_sigma2, m)?)?;
    m.add_function(wrap_pyfunction!(py_sigma2_to_snr, m)?)?;
    Ok(())
}
