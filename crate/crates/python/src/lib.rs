//! Python bindings: emulator construction and evaluation, the reference
//! solvers, the closed-form bounds and single training runs.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use relu_scl::bounds::{self, GapForm};
use relu_scl::emulator::{build_emulator, EmulatorConfig};
use relu_scl::flux::Flux;
use relu_scl::fv::{self, Boundary, GridState, NumericalFlux};
use relu_scl::init::KlInit;
use relu_scl::kl::exp_cov_modes;
use relu_scl::train::{self, ExperimentOptions, Problem, SolverSettings};
use relu_scl::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::Config(_) | Error::Dimension { .. } | Error::BoundViolated { .. } | Error::TooLarge(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = String>>(s: &str) -> PyResult<T> {
    s.parse().map_err(PyValueError::new_err)
}

/// Lax-Friedrichs emulator network with `1 + Σ y_k 2^{1-k} sin(k x)` initial data.
#[pyclass(name = "Emulator", module = "relu_scl_py", frozen)]
pub struct PyEmulator {
    inner: relu_scl::emulator::Emulator,
}

#[pymethods]
impl PyEmulator {
    #[new]
    #[pyo3(signature = (n_steps=16, d=3, t_final=0.1, flux="burgers", boundary="periodic", a=0.0, b=1.0, c0=None, k_segments=None, store_mode="unrolled"))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n_steps: usize,
        d: usize,
        t_final: f64,
        flux: &str,
        boundary: &str,
        a: f64,
        b: f64,
        c0: Option<f64>,
        k_segments: Option<usize>,
        store_mode: &str,
    ) -> PyResult<Self> {
        let mut cfg = EmulatorConfig::kl(a, b, t_final, n_steps, parse::<Flux>(flux)?, KlInit::sine(d));
        if let Some(c0) = c0 {
            cfg.c0 = c0;
        }
        cfg.boundary = parse(boundary)?;
        cfg.k_segments = k_segments;
        cfg.store_mode = parse(store_mode)?;
        let inner = build_emulator(&cfg).map_err(py_err)?;
        Ok(PyEmulator { inner })
    }

    fn eval(&self, y: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.eval(&y).map_err(py_err)
    }

    fn eval_batch(&self, py: Python<'_>, ys: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        py.detach(|| self.inner.eval_batch(&ys)).map_err(py_err)
    }

    /// `{"connectivity", "depth", "width", "magnitude"}` of the unrolled network.
    fn metrics(&self) -> BTreeMap<&'static str, f64> {
        let m = self.inner.metrics();
        BTreeMap::from([
            ("connectivity", m.connectivity as f64),
            ("depth", m.depth as f64),
            ("width", m.max_width as f64),
            ("magnitude", m.weight_magnitude),
        ])
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn cells(&self) -> usize {
        self.inner.header().j
    }

    #[getter]
    fn n_steps(&self) -> usize {
        self.inner.header().n
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.header().dt
    }

    #[getter]
    fn dx(&self) -> f64 {
        self.inner.header().dx
    }

    /// Cell centers of the output grid.
    fn centers(&self) -> Vec<f64> {
        let h = self.inner.header();
        (0..h.j).map(|j| h.domain[0] + (j as f64 + 0.5) * h.dx).collect()
    }

    fn __repr__(&self) -> String {
        let h = self.inner.header();
        format!("Emulator(N={}, J={}, K={}, inputs={})", h.n, h.j, h.k, self.inner.input_dim())
    }
}

fn grid(u0: Vec<f64>, a: f64, b: f64) -> PyResult<GridState> {
    GridState::new(a, b, u0).map_err(py_err)
}

/// First-order Lax-Friedrichs solution at `t_final` from cell values `u0` on `[a, b]`.
#[pyfunction]
#[pyo3(signature = (u0, a, b, t_final, cfl=0.9, flux="burgers", boundary="periodic"))]
pub fn lxf_solve(u0: Vec<f64>, a: f64, b: f64, t_final: f64, cfl: f64, flux: &str, boundary: &str) -> PyResult<Vec<f64>> {
    let g = grid(u0, a, b)?;
    let out = fv::lxf_solve(&parse::<Flux>(flux)?, &g, t_final, cfl, parse::<Boundary>(boundary)?).map_err(py_err)?;
    Ok(out.values)
}

/// Second-order MUSCL solution at `t_final`.
#[pyfunction]
#[pyo3(signature = (u0, a, b, t_final, cfl=0.4, flux="burgers", boundary="periodic", numerical_flux="rusanov"))]
#[allow(clippy::too_many_arguments)]
pub fn muscl_solve(u0: Vec<f64>, a: f64, b: f64, t_final: f64, cfl: f64, flux: &str, boundary: &str, numerical_flux: &str) -> PyResult<Vec<f64>> {
    let g = grid(u0, a, b)?;
    let nf: NumericalFlux = parse(numerical_flux)?;
    let out = fv::muscl_solve(&parse::<Flux>(flux)?, nf, &g, t_final, cfl, parse::<Boundary>(boundary)?).map_err(py_err)?;
    Ok(out.values)
}

#[pyfunction]
pub fn l1_distance(u: Vec<f64>, v: Vec<f64>, a: f64, b: f64) -> PyResult<f64> {
    fv::l1_distance(&grid(u, a, b)?, &grid(v, a, b)?).map_err(py_err)
}

#[pyfunction]
pub fn kuznetsov_bound(tv: f64, t_final: f64, speed: f64, n_steps: usize) -> PyResult<f64> {
    bounds::kuznetsov_bound(tv, t_final, speed, n_steps).map_err(py_err)
}

#[pyfunction]
pub fn flux_interp_bound(a: f64, b: f64, knots: usize, f2sup: f64) -> PyResult<f64> {
    bounds::flux_interp_bound(a, b, knots, f2sup).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (target_range, domain_length, layers, width, samples, param_bound, form="simplified"))]
pub fn gen_gap_bound(target_range: f64, domain_length: f64, layers: u32, width: u32, samples: usize, param_bound: f64, form: &str) -> PyResult<f64> {
    let form = match form {
        "simplified" => GapForm::Simplified,
        "sharp" => GapForm::Sharp,
        o => return Err(PyValueError::new_err(format!("unknown form '{o}' (simplified | sharp)"))),
    };
    bounds::gen_gap_bound(target_range, domain_length, layers, width, samples, param_bound, form).map_err(py_err)
}

/// Eigenvalues of the exponential covariance `σ² exp(-|u-v|/η)` on `[lo, hi]`.
#[pyfunction]
#[pyo3(signature = (sigma, eta, lo, hi, n_modes, n_quad=256))]
pub fn exp_cov_eigenvalues(sigma: f64, eta: f64, lo: f64, hi: f64, n_modes: usize, n_quad: usize) -> PyResult<Vec<f64>> {
    Ok(exp_cov_modes(sigma, eta, (lo, hi), n_modes, n_quad).map_err(py_err)?.lambdas)
}

type DatasetTuple = (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>);

/// `(params, targets, grid)` of a training set.
#[pyfunction]
#[pyo3(signature = (problem, dim, samples, seed, cells=1024))]
pub fn make_dataset(py: Python<'_>, problem: &str, dim: usize, samples: usize, seed: u64, cells: usize) -> PyResult<DatasetTuple> {
    let problem: Problem = parse(problem)?;
    let settings = SolverSettings {
        cells,
        ..SolverSettings::default()
    };
    let data = py.detach(|| train::make_dataset(problem, dim, samples, seed, &settings)).map_err(py_err)?;
    Ok((data.params, data.targets, data.grid))
}

/// Trains one network and returns its errors, gap and gap bound.
#[pyfunction]
#[pyo3(signature = (problem, dim, samples, seed=0, depth=4, width=20, epochs=2000, lr=1e-3, cells=1024))]
#[allow(clippy::too_many_arguments)]
pub fn train_run(
    py: Python<'_>,
    problem: &str,
    dim: usize,
    samples: usize,
    seed: u64,
    depth: usize,
    width: usize,
    epochs: usize,
    lr: f64,
    cells: usize,
) -> PyResult<BTreeMap<&'static str, f64>> {
    let mut opts = ExperimentOptions::desk(parse(problem)?);
    opts.seed = seed;
    opts.depth = depth;
    opts.width = width;
    opts.train.epochs = epochs;
    opts.train.lr = lr;
    opts.solver.cells = cells;
    let r = py.detach(|| train::train_run(&opts, dim, samples, 0)).map_err(py_err)?;
    Ok(BTreeMap::from([
        ("train_error", r.train_error),
        ("test_error", r.test_error),
        ("gap", r.gap),
        ("clipped_gap", r.clipped_gap),
        ("theta_max_abs", r.theta_max_abs),
        ("gap_bound", r.gap_bound),
        ("dominated", if r.dominated { 1.0 } else { 0.0 }),
    ]))
}

#[pymodule]
fn relu_scl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", relu_scl::VERSION)?;
    m.add_class::<PyEmulator>()?;
    m.add_function(wrap_pyfunction!(lxf_solve, m)?)?;
    m.add_function(wrap_pyfunction!(muscl_solve, m)?)?;
    m.add_function(wrap_pyfunction!(l1_distance, m)?)?;
    m.add_function(wrap_pyfunction!(kuznetsov_bound, m)?)?;
    m.add_function(wrap_pyfunction!(flux_interp_bound, m)?)?;
    m.add_function(wrap_pyfunction!(gen_gap_bound, m)?)?;
    m.add_function(wrap_pyfunction!(exp_cov_eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(make_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(train_run, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emulator_matches_core() {
        let e = PyEmulator::new(8, 2, 0.1, "burgers", "periodic", 0.0, 1.0, None, None, "unrolled").unwrap();
        let core = build_emulator(&EmulatorConfig::kl(0.0, 1.0, 0.1, 8, Flux::Burgers, KlInit::sine(2))).unwrap();
        let y = [0.3, 0.7];
        assert_eq!(e.eval(y.to_vec()).unwrap(), core.eval(&y).unwrap());
        assert_eq!(e.metrics()["depth"], 9.0);
        assert_eq!(e.centers().len(), e.cells());
    }

    #[test]
    fn bad_strings_are_rejected() {
        assert!(PyEmulator::new(8, 2, 0.1, "cubic", "periodic", 0.0, 1.0, None, None, "unrolled").is_err());
        assert!(gen_gap_bound(2.0, 1.0, 4, 20, 500, 10.0, "loose").is_err());
        assert!(lxf_solve(vec![1.0; 8], 0.0, 1.0, 0.1, 0.9, "burgers", "reflecting").is_err());
    }

    #[test]
    fn bounds_pass_through() {
        let v = gen_gap_bound(2.0, 1.0, 4, 20, 500, 10.0, "simplified").unwrap();
        assert!((v - 5745.960820160763).abs() < 1e-9);
        assert_eq!(kuznetsov_bound(1.0, 1.0, 0.0, 1).unwrap(), 31.0);
        assert_eq!(exp_cov_eigenvalues(1.0, 3.0, 0.0, 2.0, 3, 64).unwrap().len(), 3);
    }

    #[test]
    fn solvers_keep_constants() {
        let u = lxf_solve(vec![0.5; 16], 0.0, 1.0, 0.2, 0.9, "burgers", "periodic").unwrap();
        assert!(u.iter().all(|v| (v - 0.5).abs() < 1e-15));
        assert_eq!(l1_distance(u, vec![0.5; 8], 0.0, 1.0).unwrap(), 0.0);
    }
}
