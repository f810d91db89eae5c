//! Python bindings: problems, the SARE / HJB-series / SDRE solvers and the Monte Carlo
//! comparison. Matrices cross the boundary as lists of rows.

use std::collections::BTreeMap;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use shjb::hjb::{solve_hjb_series, Method, SeriesOptions, SeriesSolution};
use shjb::io::{ProblemFile, SolutionFile};
use shjb::linalg::to_rows;
use shjb::poly::HomPoly;
use shjb::sare::{sare_iterate, DEFAULT_MAX_ITER, DEFAULT_TOL};
use shjb::sde::{compare_feedbacks, Feedback, SimConfig};
use shjb::sdre::{integrate_pi3, integrate_sdre, SDRETrajectory};

create_exception!(shjb, ShjbError, PyException);

fn err(e: shjb::Error) -> PyErr {
    ShjbError::new_err(e.to_string())
}

type Rows = Vec<Vec<f64>>;
type Terms = Vec<(Vec<u32>, f64)>;

const FIXTURES: &[(&str, &str)] = &[
    ("lqgb", include_str!("../../core/fixtures/lqgb.json")),
    ("lqgb_cross", include_str!("../../core/fixtures/lqgb_cross.json")),
    ("lqgb_noise10x", include_str!("../../core/fixtures/lqgb_noise10x.json")),
    ("lqr_noiseless", include_str!("../../core/fixtures/lqr_noiseless.json")),
    ("pendulum", include_str!("../../core/fixtures/pendulum.json")),
    ("pendulum_printed", include_str!("../../core/fixtures/pendulum_printed.json")),
    ("sdre_lqgb", include_str!("../../core/fixtures/sdre_lqgb.json")),
    ("zero_cost", include_str!("../../core/fixtures/zero_cost.json")),
];

fn fixture_text(name: &str) -> Option<&'static str> {
    FIXTURES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

fn terms(p: &HomPoly) -> Terms {
    p.terms().map(|(idx, c)| (idx.exponents().to_vec(), c)).collect()
}

/// A problem file: linear data, optional higher-order terms, horizon and terminal cost.
#[pyclass(name = "Problem", module = "shjb", frozen)]
pub struct PyProblem {
    file: ProblemFile,
}

#[pymethods]
impl PyProblem {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { file: ProblemFile::parse(text).map_err(err)? })
    }

    #[staticmethod]
    fn read(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self { file: ProblemFile::read(&path).map_err(err)? })
    }

    /// One of the bundled problems; see `fixtures()`.
    #[staticmethod]
    fn fixture(name: &str) -> PyResult<Self> {
        let text = fixture_text(name).ok_or_else(|| ShjbError::new_err(format!("no fixture named {name:?}")))?;
        Self::from_json(text)
    }

    fn to_json(&self) -> String {
        self.file.to_json()
    }

    #[getter]
    fn name(&self) -> Option<String> {
        self.file.name.clone()
    }

    #[getter]
    fn n(&self) -> usize {
        self.file.n
    }

    #[getter]
    fn m(&self) -> usize {
        self.file.m
    }

    #[getter]
    fn r(&self) -> usize {
        self.file.r
    }

    #[getter]
    fn degree_cap(&self) -> Option<usize> {
        self.file.degree_cap
    }

    #[getter]
    fn horizon(&self) -> Option<f64> {
        self.file.horizon
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(name={:?}, n={}, m={}, r={})",
            self.file.name.as_deref().unwrap_or(""),
            self.file.n,
            self.file.m,
            self.file.r
        )
    }
}

/// Result of `solve_sare` or `solve_hjb`: `P`, `K` and any higher-degree terms.
#[pyclass(name = "Solution", module = "shjb", frozen)]
pub struct PySolution {
    file: SolutionFile,
    series: SeriesSolution,
    history: Option<String>,
}

impl PySolution {
    fn new(file: SolutionFile, history: Option<String>) -> PyResult<Self> {
        let series = file.to_solution().map_err(err)?;
        Ok(Self { file, series, history })
    }
}

#[pymethods]
impl PySolution {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Self::new(SolutionFile::parse(text).map_err(err)?, None)
    }

    fn to_json(&self) -> String {
        self.file.to_json()
    }

    /// `converged`, `diverged` or `max_iter`.
    #[getter]
    fn status(&self) -> String {
        self.file.status.to_string()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.file.status == shjb::sare::Status::Converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.file.iterations
    }

    #[getter(P)]
    fn p(&self) -> Rows {
        self.file.p.clone()
    }

    #[getter(K)]
    fn k(&self) -> Rows {
        self.file.k.clone()
    }

    /// Degree → `[(exponents, coeff), ...]` for the cost terms above degree 2.
    #[getter]
    fn pi(&self) -> BTreeMap<usize, Terms> {
        self.series.pi_hi.iter().map(|(&d, p)| (d, terms(p))).collect()
    }

    /// Degree → one term list per control component, above degree 1.
    #[getter]
    fn kappa(&self) -> BTreeMap<usize, Vec<Terms>> {
        self.series.kappa_hi.iter().map(|(&d, ks)| (d, ks.iter().map(terms).collect())).collect()
    }

    fn certificates<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.file
            .certificates
            .iter()
            .map(|c| {
                let d = PyDict::new(py);
                d.set_item("degree", c.degree)?;
                d.set_item("tau", c.tau)?;
                d.set_item("sigma", c.sigma)?;
                d.set_item("rho", c.rho)?;
                d.set_item("margin", c.margin)?;
                d.set_item("smallest_singular_value", c.smallest_singular_value)?;
                d.set_item("invertible", c.invertible())?;
                Ok(d)
            })
            .collect()
    }

    /// Truncated optimal cost at `x`.
    fn value(&self, x: Vec<f64>) -> PyResult<f64> {
        self.check_dim(&x)?;
        Ok(self.series.value(&x))
    }

    /// Truncated optimal feedback at `x`.
    fn feedback(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_dim(&x)?;
        Ok(self.series.feedback(&x))
    }

    /// Per-iteration CSV of the SARE fixed point (only for `solve_sare` results).
    fn history_csv(&self) -> Option<String> {
        self.history.clone()
    }

    fn report(&self) -> String {
        self.series.report()
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution(status={}, n={}, m={}, degree={})",
            self.file.status,
            self.file.n,
            self.file.m,
            self.series.pi_hi.keys().max().copied().unwrap_or(2)
        )
    }
}

impl PySolution {
    fn check_dim(&self, x: &[f64]) -> PyResult<()> {
        if x.len() != self.file.n {
            return Err(ShjbError::new_err(format!("expected {} coordinates, got {}", self.file.n, x.len())));
        }
        Ok(())
    }
}

/// Backward Riccati sweep on a grid.
#[pyclass(name = "Trajectory", module = "shjb", frozen)]
pub struct PyTrajectory {
    traj: SDRETrajectory,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.traj.grid.clone()
    }

    #[getter(P)]
    fn p(&self) -> Vec<Rows> {
        self.traj.p.iter().map(to_rows).collect()
    }

    #[getter(K)]
    fn k(&self) -> Vec<Rows> {
        self.traj.k.iter().map(to_rows).collect()
    }

    /// Degree-3 cost correction at each grid time, if it was integrated.
    #[getter]
    fn pi3(&self) -> Option<Vec<Terms>> {
        self.traj.pi3.as_ref().map(|v| v.iter().map(terms).collect())
    }

    fn to_csv(&self) -> String {
        self.traj.to_csv()
    }

    fn __len__(&self) -> usize {
        self.traj.grid.len()
    }
}

/// Fixed-point iteration for the stochastic algebraic Riccati equation.
#[pyfunction]
#[pyo3(signature = (problem, tol = DEFAULT_TOL, max_iter = DEFAULT_MAX_ITER))]
fn solve_sare(py: Python<'_>, problem: &PyProblem, tol: f64, max_iter: usize) -> PyResult<PySolution> {
    let lin = problem.file.lqgb().map_err(err)?;
    let res = py.detach(|| sare_iterate(&lin, tol, max_iter)).map_err(err)?;
    PySolution::new(SolutionFile::from_sare(&res), Some(res.history_csv()))
}

/// Power-series solution of the HJB equations up to `degree` (default: the file's cap).
#[pyfunction]
#[pyo3(signature = (problem, degree = None, method = "direct"))]
fn solve_hjb(py: Python<'_>, problem: &PyProblem, degree: Option<usize>, method: &str) -> PyResult<PySolution> {
    let nonlinear = problem.file.nonlinear(degree).map_err(err)?;
    let opts = SeriesOptions {
        method: method.parse::<Method>().map_err(err)?,
        ..SeriesOptions::default()
    };
    let sol = py.detach(|| solve_hjb_series(&nonlinear, &opts)).map_err(err)?;
    PySolution::new(SolutionFile::from_series(&sol), None)
}

/// Integrates the differential Riccati equation backward from the terminal time; with
/// `pi3`, also the degree-3 cost correction.
#[pyfunction]
#[pyo3(signature = (problem, steps = 3000, horizon = None, pi3 = false))]
fn integrate(py: Python<'_>, problem: &PyProblem, steps: usize, horizon: Option<f64>, pi3: bool) -> PyResult<PyTrajectory> {
    let tv = problem.file.time_varying(horizon).map_err(err)?;
    let traj = py
        .detach(|| {
            let traj = integrate_sdre(&tv, steps)?;
            if pi3 {
                integrate_pi3(&tv, &traj)
            } else {
                Ok(traj)
            }
        })
        .map_err(err)?;
    Ok(PyTrajectory { traj })
}

/// Monte Carlo cost of the feedback truncated at each of `degrees`, with common random
/// numbers. Returns one dict per feedback.
#[pyfunction]
#[pyo3(signature = (problem, solution, x0, degrees = None, horizon = 10.0, dt = 1e-3, paths = 10_000, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    problem: &PyProblem,
    solution: &PySolution,
    x0: Vec<f64>,
    degrees: Option<Vec<usize>>,
    horizon: f64,
    dt: f64,
    paths: usize,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let nonlinear = problem.file.nonlinear(None).map_err(err)?;
    if solution.file.n != nonlinear.n() || solution.file.m != nonlinear.m() {
        return Err(ShjbError::new_err("solution and problem dimensions differ"));
    }
    let top = solution.series.kappa_hi.keys().copied().max().unwrap_or(1);
    let feedbacks: Vec<Feedback> = degrees
        .unwrap_or_else(|| vec![top])
        .iter()
        .map(|&d| Feedback::from_solution(format!("degree{d}"), &solution.series, d))
        .collect();
    let cfg = SimConfig::new(x0, horizon, dt, paths, seed);
    let cmp = py.detach(|| compare_feedbacks(&nonlinear, &feedbacks, &cfg)).map_err(err)?;
    cmp.rows
        .iter()
        .map(|(label, r)| {
            let d = PyDict::new(py);
            d.set_item("feedback", label)?;
            d.set_item("mean", r.mean_cost)?;
            d.set_item("std_error", r.std_error)?;
            d.set_item("paths", r.paths)?;
            d.set_item("diverged", r.paths_diverged)?;
            Ok(d)
        })
        .collect()
}

/// Names accepted by `Problem.fixture`.
#[pyfunction]
fn fixtures() -> Vec<&'static str> {
    FIXTURES.iter().map(|(n, _)| *n).collect()
}

#[pymodule]
#[pyo3(name = "shjb")]
fn shjb_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ShjbError", m.py().get_type::<ShjbError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PySolution>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(solve_sare, m)?)?;
    m.add_function(wrap_pyfunction!(solve_hjb, m)?)?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fixtures, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use shjb::poly::MultiIndex;

    #[test]
    fn every_fixture_parses() {
        for (name, text) in FIXTURES {
            let file = ProblemFile::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(file.name.is_some(), "{name}");
        }
        assert!(fixture_text("pendulum").is_some());
        assert!(fixture_text("nope").is_none());
    }

    #[test]
    fn terms_keep_exponents() {
        let p = HomPoly::from_terms(2, 3, [(MultiIndex::new(vec![2, 1]), 1.5), (MultiIndex::new(vec![0, 3]), -2.0)]).unwrap();
        let mut t = terms(&p);
        t.sort_by(|a, b| a.0.cmp(&b.0));
        assert_eq!(t, vec![(vec![0, 3], -2.0), (vec![2, 1], 1.5)]);
    }
}
