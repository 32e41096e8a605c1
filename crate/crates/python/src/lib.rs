//! Python bindings: potentials, mobilities, noise, the spectral grid and
//! path simulation driven by config text.

use std::sync::Arc;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use stochch::config::parse_config;
use stochch::diagnostics::mc_energy_inequality;
use stochch::mobility::{build_m_eps, confinement_gap, MobilitySpec, TruncatedMobility};
use stochch::noise::NoiseSpec;
use stochch::potentials::{build_eps_reg, build_lambda_reg, PotentialSpec, RegularizedPotential};
use stochch::spectral::{Backend, SpectralGrid};
use stochch::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::BlowUp { .. } | Error::NoConvergence { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// A double-well potential on `[-1, 1]` (or the whole line for `polynomial`).
#[pyclass(name = "Potential", frozen)]
struct PyPotential {
    inner: PotentialSpec,
}

#[pymethods]
impl PyPotential {
    #[staticmethod]
    fn logarithmic(theta: f64, theta0: f64) -> PyResult<Self> {
        PotentialSpec::logarithmic(theta, theta0)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[staticmethod]
    fn double_obstacle() -> Self {
        Self {
            inner: PotentialSpec::double_obstacle(),
        }
    }

    #[staticmethod]
    fn polynomial() -> Self {
        Self {
            inner: PotentialSpec::polynomial(),
        }
    }

    #[getter]
    fn c_f(&self) -> f64 {
        self.inner.c_f()
    }

    fn f(&self, r: f64) -> PyResult<f64> {
        self.inner.eval_f(r).map_err(py_err)
    }

    fn df(&self, r: f64) -> PyResult<f64> {
        self.inner.eval_d1f(r).map_err(py_err)
    }

    fn d2f(&self, r: f64) -> PyResult<f64> {
        self.inner.eval_d2f(r).map_err(py_err)
    }

    /// Yosida-regularized version (whole-line potentials only).
    fn regularize_lambda(&self, lam: f64) -> PyResult<PyRegularized> {
        build_lambda_reg(&self.inner, self.inner.c_f(), lam)
            .map(|inner| PyRegularized { inner })
            .map_err(py_err)
    }

    /// Truncated version (singular potentials only).
    fn regularize_eps(&self, eps: f64) -> PyResult<PyRegularized> {
        build_eps_reg(&self.inner, eps)
            .map(|inner| PyRegularized { inner })
            .map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Potential({:?})", self.inner.kind())
    }
}

#[pyclass(name = "RegularizedPotential", frozen)]
struct PyRegularized {
    inner: RegularizedPotential,
}

#[pymethods]
impl PyRegularized {
    fn f(&self, r: f64) -> f64 {
        self.inner.value(r)
    }

    fn df(&self, r: f64) -> f64 {
        self.inner.d1(r)
    }

    fn d2f(&self, r: f64) -> f64 {
        self.inner.d2(r)
    }

    #[getter]
    fn sup_d2(&self) -> f64 {
        self.inner.sup_d2()
    }
}

#[pyclass(name = "Mobility", frozen)]
struct PyMobility {
    inner: MobilitySpec,
}

#[pymethods]
impl PyMobility {
    #[staticmethod]
    fn constant(m0: f64) -> PyResult<Self> {
        MobilitySpec::constant(m0).map(|inner| Self { inner }).map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (alpha = 1.0))]
    fn poly_degenerate(alpha: f64) -> PyResult<Self> {
        MobilitySpec::poly_degenerate(alpha)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    fn m(&self, r: f64) -> PyResult<f64> {
        self.inner.eval_m(r).map_err(py_err)
    }

    /// Entropy `M` with `M'' = 1/m`, `M(0) = M'(0) = 0`.
    fn entropy(&self, r: f64) -> PyResult<f64> {
        self.inner.eval_big_m(r).map_err(py_err)
    }

    #[getter]
    fn lip_m(&self) -> f64 {
        self.inner.lip_m()
    }

    fn truncate(&self, eps: f64) -> PyResult<PyTruncatedMobility> {
        build_m_eps(&self.inner, eps)
            .map(|inner| PyTruncatedMobility { inner })
            .map_err(py_err)
    }
}

#[pyclass(name = "TruncatedMobility", frozen)]
struct PyTruncatedMobility {
    inner: TruncatedMobility,
}

#[pymethods]
impl PyTruncatedMobility {
    fn m(&self, r: f64) -> f64 {
        self.inner.m(r)
    }

    fn entropy(&self, r: f64) -> f64 {
        self.inner.entropy(r)
    }

    /// `((|r|-1)₊², 2ε‖m'‖ M_ε(r))`; the first never exceeds the second.
    fn confinement_gap(&self, r: f64) -> (f64, f64) {
        confinement_gap(&self.inner, r)
    }
}

#[pyclass(name = "Noise", frozen)]
struct PyNoise {
    inner: NoiseSpec,
}

#[pymethods]
impl PyNoise {
    /// `g_k = σ₀(k+1)^{-p}(1 - r²)` for `k < modes`.
    #[new]
    #[pyo3(signature = (sigma0, p = 1.0, modes = 16))]
    fn new(sigma0: f64, p: f64, modes: usize) -> PyResult<Self> {
        NoiseSpec::default_shape(sigma0, p, modes)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    fn sigma(&self, k: usize) -> f64 {
        self.inner.sigma(k)
    }

    #[getter]
    fn c_g(&self) -> f64 {
        self.inner.c_g()
    }

    /// Per-mode `sup |g_k|²|F''|`, `sup |g_k|² M''` and `L_G`.
    #[pyo3(signature = (potential, mobility, grid_n = 0))]
    fn compat<'py>(
        &self,
        py: Python<'py>,
        potential: &PyPotential,
        mobility: &PyMobility,
        grid_n: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let c = self
            .inner
            .compat_constants(&potential.inner, &mobility.inner, grid_n)
            .map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("sup_f", c.sup_f)?;
        d.set_item("sup_m", c.sup_m)?;
        d.set_item("l_g", c.l_g)?;
        d.set_item("analytic_bound", c.analytic_bound)?;
        Ok(d)
    }
}

#[pyclass(name = "Grid", frozen)]
struct PyGrid {
    inner: Arc<SpectralGrid>,
}

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (lengths, modes, oversample = 1.5, backend = "fast"))]
    fn new(lengths: Vec<f64>, modes: usize, oversample: f64, backend: &str) -> PyResult<Self> {
        let backend = match backend {
            "fast" => Backend::Fast,
            "naive" => Backend::Naive,
            other => return Err(PyValueError::new_err(format!("unknown backend '{other}'"))),
        };
        SpectralGrid::new(&lengths, modes, oversample, backend)
            .map(|g| Self { inner: Arc::new(g) })
            .map_err(py_err)
    }

    #[getter]
    fn n_coeffs(&self) -> usize {
        self.inner.n_coeffs()
    }

    #[getter]
    fn n_points(&self) -> usize {
        self.inner.n_points()
    }

    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.inner.alpha().to_vec()
    }

    fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.inner.n_points()).map(|i| self.inner.node(i)).collect()
    }

    fn to_values(&self, coeffs: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.to_values(&coeffs).map_err(py_err)
    }

    fn to_coeffs(&self, values: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.to_coeffs(&values).map_err(py_err)
    }
}

/// Canonical form of a config, with every default filled in.
#[pyfunction]
fn canonical_config(text: &str) -> PyResult<String> {
    parse_config(text).map(|s| s.to_text()).map_err(py_err)
}

/// Runs one path; returns the recorded time series and the final coefficients.
#[pyfunction]
#[pyo3(signature = (config, path = 0))]
fn simulate<'py>(py: Python<'py>, config: &str, path: u64) -> PyResult<Bound<'py, PyDict>> {
    let cfg = parse_config(config).and_then(|s| s.build()).map_err(py_err)?;
    let recs = py
        .detach(|| stochch::simulate_path(&cfg, path))
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("t", recs.iter().map(|r| r.t).collect::<Vec<_>>())?;
    d.set_item("mass", recs.iter().map(|r| r.mass).collect::<Vec<_>>())?;
    d.set_item("energy", recs.iter().map(|r| r.energy).collect::<Vec<_>>())?;
    d.set_item("dissipation_acc", recs.iter().map(|r| r.dissipation_acc).collect::<Vec<_>>())?;
    d.set_item("sup_abs_phi", recs.iter().map(|r| r.sup_abs_phi).collect::<Vec<_>>())?;
    d.set_item("noise_mass_acc", recs.iter().map(|r| r.noise_mass_acc).collect::<Vec<_>>())?;
    let last = recs.last().expect("initial record is always present");
    d.set_item("final_coeffs", last.phi.coeffs().to_vec())?;
    Ok(d)
}

/// Monte Carlo energy inequality with the calibrated scheme allowance.
#[pyfunction]
#[pyo3(signature = (config, paths = 64))]
fn check_energy<'py>(py: Python<'py>, config: &str, paths: usize) -> PyResult<Bound<'py, PyDict>> {
    let cfg = parse_config(config).and_then(|s| s.build()).map_err(py_err)?;
    let r = py
        .detach(|| mc_energy_inequality(&cfg, paths, false))
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("pass", r.pass)?;
    d.set_item("allowance", r.allowance)?;
    d.set_item("worst_margin", r.worst_margin())?;
    d.set_item("t", r.checkpoints.iter().map(|c| c.t).collect::<Vec<_>>())?;
    d.set_item("residual", r.checkpoints.iter().map(|c| c.residual.mean).collect::<Vec<_>>())?;
    Ok(d)
}

#[pymodule]
fn stochch_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPotential>()?;
    m.add_class::<PyRegularized>()?;
    m.add_class::<PyMobility>()?;
    m.add_class::<PyTruncatedMobility>()?;
    m.add_class::<PyNoise>()?;
    m.add_class::<PyGrid>()?;
    m.add_function(wrap_pyfunction!(canonical_config, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(check_energy, m)?)?;
    Ok(())
}
