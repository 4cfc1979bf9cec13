//! Python bindings: the located heat problem, the Poisson example and the
//! rate analysis helpers.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use regpath::analysis;
use regpath::elliptic::{poisson_example, EllipticProblem};
use regpath::error::Error;
use regpath::located::LocatedHeatBackend;
use regpath::manufactured;
use regpath::mesh::{NodalField, SpaceMesh};
use regpath::parabolic::{DenseLoad, ParabolicOperator};
use regpath::solver::{self, FixedPointConfig, PathConfig, ProblemBackend, RegPath};
use regpath::time_grid::{TimePartition, DEFAULT_GAUSS_ORDER};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::DimensionMismatch { .. } | Error::Parse(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_python<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn fixed_point(tol: f64, max_iterations: usize, damping: f64) -> FixedPointConfig {
    FixedPointConfig {
        tolerance: tol,
        max_iterations,
        damping,
        ..FixedPointConfig::default()
    }
}

fn path_result<'py>(py: Python<'py>, path: RegPath) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("records", to_python(py, &path.records)?)?;
    let failures: Vec<(i32, String)> = path.failures.iter().map(|f| (f.level, f.error.to_string())).collect();
    out.set_item("failures", failures)?;
    Ok(out)
}

/// Closed-form data of the located heat example with parameter `kappa`.
#[pyclass(name = "ManufacturedProblem", frozen)]
struct PyManufactured(manufactured::ManufacturedProblem);

#[pymethods]
impl PyManufactured {
    #[new]
    fn new(kappa: f64) -> PyResult<Self> {
        manufactured::ManufacturedProblem::located_heat(kappa).map(Self).map_err(py_err)
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.0.kappa
    }

    #[getter]
    fn end_time(&self) -> f64 {
        self.0.end_time
    }

    fn exact_control(&self) -> f64 {
        self.0.exact_control()
    }

    fn b_star_adjoint(&self, t: f64) -> f64 {
        self.0.b_star_adjoint(t)
    }

    fn exact_state(&self, t: f64, x1: f64, x2: f64) -> f64 {
        self.0.exact_state(t, x1, x2)
    }

    fn exact_zero_measure(&self, eps: f64) -> f64 {
        self.0.exact_zero_measure(eps)
    }
}

/// Discretized located heat problem on a uniform grid.
#[pyclass(name = "LocatedHeat", frozen)]
struct PyLocatedHeat(LocatedHeatBackend);

#[pymethods]
impl PyLocatedHeat {
    #[new]
    #[pyo3(signature = (kappa, n_per_side = 17, time_steps = 512, gauss_order = DEFAULT_GAUSS_ORDER))]
    fn new(kappa: f64, n_per_side: usize, time_steps: usize, gauss_order: usize) -> PyResult<Self> {
        let problem = manufactured::ManufacturedProblem::located_heat(kappa).map_err(py_err)?;
        LocatedHeatBackend::manufactured_with_order(&problem, n_per_side, time_steps, gauss_order)
            .map(Self)
            .map_err(py_err)
    }

    /// Time nodes of the partition.
    fn time_nodes(&self) -> Vec<f64> {
        self.0.partition().nodes().to_vec()
    }

    /// Solves for one `alpha`; returns the outcome and the per-level metrics.
    #[pyo3(signature = (alpha, tol = 1e-5, max_iterations = 10_000, damping = 1.0))]
    fn solve<'py>(
        &self,
        py: Python<'py>,
        alpha: f64,
        tol: f64,
        max_iterations: usize,
        damping: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let outcome = solver::solve_fixed_point(&self.0, alpha, &fixed_point(tol, max_iterations, damping))
            .map_err(py_err)?;
        let metrics = self.0.metrics(alpha, &outcome.q).map_err(py_err)?;
        let out = PyDict::new(py);
        out.set_item("outcome", to_python(py, &outcome)?)?;
        out.set_item("metrics", to_python(py, &metrics)?)?;
        Ok(out)
    }

    /// Evaluates the control `P(-q / alpha)` at the times `t`.
    fn control_values(&self, alpha: f64, q: Vec<f64>, t: Vec<f64>) -> PyResult<Vec<f64>> {
        let u = self.0.implicit_control(alpha, &q).map_err(py_err)?;
        Ok(t.iter().map(|&s| u.eval(s)).collect())
    }

    /// Runs the levels `alpha = 2^-l`.
    #[pyo3(signature = (levels, tol = 1e-5, warm_start = false, damping = 1.0))]
    fn path<'py>(
        &self,
        py: Python<'py>,
        levels: Vec<i32>,
        tol: f64,
        warm_start: bool,
        damping: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let cfg = PathConfig {
            fixed_point: fixed_point(tol, 10_000, damping),
            warm_start,
        };
        path_result(py, solver::run_reg_path(&self.0, &levels, &cfg).map_err(py_err)?)
    }
}

/// Distributed Poisson control with a target generated from a control that
/// exceeds the bounds near the centre.
#[pyclass(name = "PoissonExample", frozen)]
struct PyPoisson(EllipticProblem);

#[pymethods]
impl PyPoisson {
    #[new]
    #[pyo3(signature = (n_per_side = 17))]
    fn new(n_per_side: usize) -> PyResult<Self> {
        poisson_example(n_per_side).map(|(p, _)| Self(p)).map_err(py_err)
    }

    /// Runs the levels `alpha = 2^-l` and returns the records together with
    /// the monotonicity slacks between consecutive levels.
    #[pyo3(signature = (levels, tol = 1e-10, damping = 0.5))]
    fn path<'py>(&self, py: Python<'py>, levels: Vec<i32>, tol: f64, damping: f64) -> PyResult<Bound<'py, PyDict>> {
        let cfg = PathConfig {
            fixed_point: fixed_point(tol, 10_000, damping),
            warm_start: false,
        };
        let path = solver::run_reg_path(&self.0, &levels, &cfg).map_err(py_err)?;
        let slacks = path
            .records
            .windows(2)
            .map(|w| solver::check_monotonicity_inequality(&self.0, &w[0], &w[1]))
            .collect::<Result<Vec<f64>, _>>()
            .map_err(py_err)?;
        let out = path_result(py, path)?;
        out.set_item("slacks", slacks)?;
        Ok(out)
    }
}

#[pyfunction]
fn regularization_parameter(level: i32) -> f64 {
    solver::regularization_parameter(level)
}

/// Experimental orders of convergence; `None` where undefined.
#[pyfunction]
fn eoc(errors: Vec<f64>, alphas: Vec<f64>) -> PyResult<Vec<Option<f64>>> {
    analysis::eoc(&errors, &alphas).map_err(py_err)
}

/// Least-squares fit of `value ~ C alpha^p`; returns `(p, C)`.
#[pyfunction]
#[pyo3(signature = (values, alphas, last = None))]
fn fit_rate(values: Vec<f64>, alphas: Vec<f64>, last: Option<usize>) -> PyResult<(f64, f64)> {
    let fit = analysis::fit_tail(&values, &alphas, last).map_err(py_err)?;
    Ok((fit.exponent, fit.constant))
}

/// Largest relative defect of the discrete duality pairing over `cases`
/// random load pairs on an `n x n` mesh with `steps` time steps.
#[pyfunction]
#[pyo3(signature = (n_per_side = 5, steps = 8, cases = 10, seed = 0))]
fn adjointness_defect(n_per_side: usize, steps: usize, cases: usize, seed: u64) -> PyResult<f64> {
    let mesh = Arc::new(SpaceMesh::uniform(n_per_side).map_err(py_err)?);
    let partition = Arc::new(TimePartition::uniform(steps, 0.5).map_err(py_err)?);
    let op = ParabolicOperator::new(mesh.clone(), partition).map_err(py_err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field = || -> Vec<f64> {
        mesh.boundary_mask().iter().map(|&b| if b { 0.0 } else { rng.random_range(-1.0..1.0) }).collect()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let f = DenseLoad((0..steps).map(|_| field()).collect());
        let h = DenseLoad((0..steps).map(|_| field()).collect());
        let y0 = NodalField::new(field());
        worst = worst.max(op.check_adjointness(&f, &y0, &h).map_err(py_err)?);
    }
    Ok(worst)
}

#[pymodule]
#[pyo3(name = "regpath")]
fn regpath_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyManufactured>()?;
    m.add_class::<PyLocatedHeat>()?;
    m.add_class::<PyPoisson>()?;
    m.add_function(wrap_pyfunction!(regularization_parameter, m)?)?;
    m.add_function(wrap_pyfunction!(eoc, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rate, m)?)?;
    m.add_function(wrap_pyfunction!(adjointness_defect, m)?)?;
    Ok(())
}
