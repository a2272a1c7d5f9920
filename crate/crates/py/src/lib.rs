//! Python bindings for the lattice-oscillator localization library: the
//! displacement algebra, regions, truncated bases, metrics, Hamiltonian
//! assembly and small disorder sweeps.
//!
//! Oscillator configurations cross the boundary as
//! `[(site_coords, count), ...]`; basis states as
//! `(site_coords, config)`.

use std::sync::Arc;

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use holstein_core as core;
use holstein_core::basis::{BasisState, OscillatorConfig};
use holstein_core::hamiltonian::SubspaceSelector;
use holstein_core::resolvent::ResolventSolver;

type PyConfig = Vec<(Vec<i64>, u32)>;
type PyState = (Vec<i64>, PyConfig);

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn val<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyfunction]
fn laguerre(n: u32, alpha: u32, x: f64) -> f64 {
    core::oscillator::laguerre(n, alpha, x)
}

#[pyfunction]
fn displacement_element(m: u32, n: u32, beta: Complex64) -> Complex64 {
    core::oscillator::displacement_element(m, n, beta)
}

#[pyfunction]
fn weighted_square_sum(n: u32, beta: Complex64, mu: f64) -> PyResult<f64> {
    core::oscillator::weighted_square_sum(n, beta, mu).map_err(err)
}

#[pyfunction]
fn weighted_square_sum_closed(n: u32, beta: Complex64, mu: f64) -> f64 {
    core::oscillator::weighted_square_sum_closed(n, beta, mu)
}

#[pyfunction]
fn dispsum_profile(n: u32, beta: Complex64, mu: f64, p: f64) -> PyResult<f64> {
    core::oscillator::dispsum_profile(n, beta, mu, p).map_err(err)
}

#[pyfunction]
fn sqrt_metric_sum(n: u32, mu: f64, alpha: f64) -> PyResult<f64> {
    core::oscillator::sqrt_metric_sum(n, mu, alpha).map_err(err)
}

/// Finite lattice region with open boundaries.
#[pyclass]
struct Region {
    inner: Arc<core::LatticeRegion>,
}

impl Region {
    fn config(&self, spec: &PyConfig) -> PyResult<OscillatorConfig> {
        let counts = spec
            .iter()
            .map(|(coords, count)| self.inner.site_id(coords).map(|id| (id, *count)))
            .collect::<core::Result<Vec<_>>>()
            .map_err(val)?;
        Ok(OscillatorConfig::from_counts(counts))
    }

    fn state(&self, spec: &PyState) -> PyResult<BasisState> {
        let site = self.inner.site_id(&spec.0).map_err(val)?;
        Ok(BasisState::new(site, self.config(&spec.1)?))
    }
}

#[pymethods]
impl Region {
    /// Box region with the given extents, minus the excluded sites.
    #[new]
    #[pyo3(signature = (extents, exclude = Vec::new()))]
    fn new(extents: Vec<usize>, exclude: Vec<Vec<i64>>) -> PyResult<Self> {
        Ok(Self {
            inner: Arc::new(core::LatticeRegion::boxed(&extents, &exclude).map_err(val)?),
        })
    }

    #[staticmethod]
    fn from_sites(dimension: usize, sites: Vec<Vec<i64>>) -> PyResult<Self> {
        Ok(Self {
            inner: Arc::new(core::LatticeRegion::from_sites(dimension, sites).map_err(val)?),
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn sites(&self) -> Vec<Vec<i64>> {
        self.inner
            .site_ids()
            .map(|id| self.inner.coords(id).to_vec())
            .collect()
    }

    /// In-region graph distance; None when unreachable.
    fn distance(&self, x: Vec<i64>, y: Vec<i64>) -> PyResult<Option<u32>> {
        let a = self.inner.site_id(&x).map_err(val)?;
        let b = self.inner.site_id(&y).map_err(val)?;
        Ok(self.inner.distance(a, b))
    }

    fn ball(&self, center: Vec<i64>, radius: u32) -> PyResult<Vec<Vec<i64>>> {
        self.inner.ball_coords(&center, radius).map_err(val)
    }

    fn boundary(&self, subset: Vec<Vec<i64>>) -> PyResult<Vec<Vec<i64>>> {
        let ids = subset
            .iter()
            .map(|c| self.inner.site_id(c))
            .collect::<core::Result<Vec<_>>>()
            .map_err(val)?;
        Ok(self
            .inner
            .boundary(&ids)
            .map_err(val)?
            .into_iter()
            .map(|id| self.inner.coords(id).to_vec())
            .collect())
    }

    // metric family on basis states

    fn upsilon(&self, x: Vec<i64>, m: PyConfig, y: Vec<i64>, xi: PyConfig) -> PyResult<u32> {
        let a = self.state(&(x, m))?;
        let b = self.state(&(y, xi))?;
        core::metrics::upsilon(&self.inner, a.site, &a.config, b.site, &b.config).map_err(err)
    }

    fn fock_r(&self, m: PyConfig, xi: PyConfig) -> PyResult<f64> {
        Ok(core::metrics::r_metric(&self.config(&m)?, &self.config(&xi)?))
    }

    fn shell_distance(&self, m: PyConfig, k: u32) -> PyResult<f64> {
        core::metrics::shell_distance(&self.inner, &self.config(&m)?, k).map_err(err)
    }

    fn shell_collapsed_r(&self, m: PyConfig, xi: PyConfig, k: u32) -> PyResult<f64> {
        core::metrics::shell_collapsed_r(&self.inner, &self.config(&m)?, &self.config(&xi)?, k)
            .map_err(err)
    }

    fn walk_metric(&self, x: Vec<i64>, m: PyConfig, y: Vec<i64>, xi: PyConfig) -> PyResult<u32> {
        let a = self.state(&(x, m))?;
        let b = self.state(&(y, xi))?;
        core::metrics::walk_metric(&self.inner, a.site, &a.config, b.site, &b.config).map_err(err)
    }

    fn d_metric(&self, x: Vec<i64>, m: PyConfig, y: Vec<i64>, xi: PyConfig) -> PyResult<f64> {
        let a = self.state(&(x, m))?;
        let b = self.state(&(y, xi))?;
        core::metrics::d_metric(&self.inner, a.site, &a.config, b.site, &b.config).map_err(err)
    }
}

/// Model couplings; `density` is `None` for uniform or `(a, b)` for the
/// rescaled beta family.
#[pyclass]
struct Model {
    inner: core::ModelParams,
}

#[pymethods]
impl Model {
    #[new]
    #[pyo3(signature = (dimension, gamma, omega, beta, v_plus, density = None))]
    fn new(
        dimension: usize,
        gamma: f64,
        omega: f64,
        beta: Complex64,
        v_plus: f64,
        density: Option<(f64, f64)>,
    ) -> PyResult<Self> {
        let density = match density {
            None => core::DensityKind::Uniform,
            Some((a, b)) => core::DensityKind::TruncatedBeta { a, b },
        };
        let inner = core::ModelParams {
            dimension,
            gamma,
            omega,
            beta,
            v_plus,
            density,
        };
        inner.validate().map_err(val)?;
        Ok(Self { inner })
    }

    #[getter]
    fn spectral_gap(&self) -> f64 {
        self.inner.spectral_gap()
    }

    fn band(&self, k: u32) -> (f64, f64) {
        self.inner.band(k)
    }

    fn window(&self, k: u32) -> (f64, f64) {
        self.inner.window(k)
    }
}

/// Ordered truncated basis enumeration over a region.
#[pyclass]
struct Basis {
    region: Arc<core::LatticeRegion>,
    inner: Arc<core::BasisEnumeration>,
}

#[pymethods]
impl Basis {
    #[new]
    #[pyo3(signature = (region, k_max, per_site_cap = None))]
    fn new(region: &Region, k_max: u32, per_site_cap: Option<u32>) -> PyResult<Self> {
        let mut policy = core::TruncationPolicy::new(k_max);
        if let Some(cap) = per_site_cap {
            policy = policy.with_per_site_cap(cap);
        }
        Ok(Self {
            region: region.inner.clone(),
            inner: Arc::new(
                core::BasisEnumeration::new(region.inner.clone(), policy).map_err(val)?,
            ),
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn configs_per_site(&self) -> usize {
        self.inner.configs_per_site()
    }

    fn state(&self, index: usize) -> PyResult<PyState> {
        if index >= self.inner.len() {
            return Err(val("basis index out of range"));
        }
        let state = self.inner.state(index);
        let config = state
            .config
            .support()
            .map(|(id, c)| (self.region.coords(id).to_vec(), c))
            .collect();
        Ok((self.region.coords(state.site).to_vec(), config))
    }

    fn index_of(&self, state: PyState) -> PyResult<Option<usize>> {
        let region = Region {
            inner: self.region.clone(),
        };
        Ok(self.inner.index_of(&region.state(&state)?))
    }

    fn shell(&self, k: u32) -> Vec<usize> {
        self.inner.shell(k).to_vec()
    }

    fn dump(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.dump(&mut buf).map_err(err)?;
        String::from_utf8(buf).map_err(err)
    }
}

/// Assembled (possibly restricted) operator for one disorder realization.
#[pyclass]
struct Hamiltonian {
    inner: core::OperatorMatrix,
}

fn parse_selector(region: &core::LatticeRegion, spec: Option<(String, u32)>) -> PyResult<SubspaceSelector> {
    let Some((name, k)) = spec else {
        return Ok(SubspaceSelector::Full);
    };
    let _ = region;
    match name.as_str() {
        "full" => Ok(SubspaceSelector::Full),
        "band_in" => Ok(SubspaceSelector::BandIn(k)),
        "band_out" => Ok(SubspaceSelector::BandOut(k)),
        "band_split" => Ok(SubspaceSelector::BandSplit(k)),
        other => Err(val(format!(
            "unknown selector '{other}'; use full, band_in, band_out or band_split"
        ))),
    }
}

#[pymethods]
impl Hamiltonian {
    /// Sample disorder with `(seed, realization)` and assemble.
    #[new]
    #[pyo3(signature = (basis, model, seed, realization = 0, selector = None))]
    fn new(
        basis: &Basis,
        model: &Model,
        seed: u64,
        realization: u64,
        selector: Option<(String, u32)>,
    ) -> PyResult<Self> {
        let disorder =
            core::sample_disorder(&basis.region, &model.inner, seed, realization).map_err(val)?;
        let sel = parse_selector(&basis.region, selector)?;
        let inner = core::assemble(&basis.inner, &model.inner, &disorder, &sel).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn nnz(&self) -> usize {
        self.inner.nnz()
    }

    #[getter]
    fn leaked_weight(&self) -> f64 {
        self.inner.leaked_weight()
    }

    fn hermiticity_defect(&self) -> f64 {
        self.inner.hermiticity_defect()
    }

    /// Mean hopping weight a shell loses to the basis cutoff.
    fn truncation_sensitivity(&self, shell: u32) -> f64 {
        self.inner.truncation_sensitivity(shell)
    }

    /// Stored entries as `(row, col, value)` triplets in local indices.
    fn triplets(&self) -> Vec<(usize, usize, Complex64)> {
        let mut out = Vec::with_capacity(self.inner.nnz());
        for (r, row) in self.inner.rows().iter().enumerate() {
            for &(c, v) in row {
                out.push((r, c, v));
            }
        }
        out
    }

    /// Global basis indices of the selected rows.
    fn global_indices(&self) -> Vec<usize> {
        self.inner.global_indices().to_vec()
    }

    fn eigenvalues(&self) -> PyResult<Vec<f64>> {
        Ok(self.inner.spectrum(6000, false).map_err(err)?.values)
    }

    /// `<row|(H - z)^{-1}|col>` in global basis indices.
    fn greens(&self, row: usize, col: usize, z: Complex64) -> PyResult<Complex64> {
        core::resolvent::greens_element(
            &self.inner,
            core::resolvent::GreenQuery { row, col, z },
        )
        .map_err(err)
    }

    /// One full resolvent column in global index order.
    fn greens_column(&self, col: usize, z: Complex64) -> PyResult<Vec<Complex64>> {
        let local = self
            .inner
            .local_of_global(col)
            .ok_or_else(|| val("column outside the selected subspace"))?;
        let solver = ResolventSolver::new(&self.inner, z).map_err(err)?;
        solver.column(local).map_err(err)
    }
}

/// Disorder-averaged fractional moments `E|G(a, b; z)|^s` for basis-state
/// pairs; returns one dict per pair with mean and bootstrap error.
#[pyfunction]
#[pyo3(signature = (region, model, k_max, pairs, z, s, realizations, seed, workers = 1))]
#[allow(clippy::too_many_arguments)]
fn fractional_moment_sweep(
    py: Python<'_>,
    region: &Region,
    model: &Model,
    k_max: u32,
    pairs: Vec<(PyState, PyState)>,
    z: Complex64,
    s: f64,
    realizations: u32,
    seed: u64,
    workers: usize,
) -> PyResult<Vec<Py<PyAny>>> {
    let resolved = pairs
        .iter()
        .map(|(a, b)| Ok((region.state(a)?, region.state(b)?)))
        .collect::<PyResult<Vec<_>>>()?;
    let config = core::sweep::SweepConfig {
        region: region.inner.clone(),
        params: model.inner,
        policy: core::TruncationPolicy::new(k_max),
        pairs: resolved,
        energies: vec![z],
        s,
        realizations,
        base_seed: seed,
        workers,
    };
    let table = core::sweep::fractional_moment_sweep(&config).map_err(err)?;
    table
        .rows
        .iter()
        .map(|row| {
            let dict = pyo3::types::PyDict::new(py);
            dict.set_item("pair", row.pair)?;
            dict.set_item("mean", row.mean)?;
            dict.set_item("std_err", row.std_err)?;
            dict.set_item("n", row.n)?;
            Ok(dict.into_any().unbind())
        })
        .collect()
}

#[pymodule]
fn holstein(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(laguerre, m)?)?;
    m.add_function(wrap_pyfunction!(displacement_element, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_square_sum, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_square_sum_closed, m)?)?;
    m.add_function(wrap_pyfunction!(dispsum_profile, m)?)?;
    m.add_function(wrap_pyfunction!(sqrt_metric_sum, m)?)?;
    m.add_function(wrap_pyfunction!(fractional_moment_sweep, m)?)?;
    m.add_class::<Region>()?;
    m.add_class::<Model>()?;
    m.add_class::<Basis>()?;
    m.add_class::<Hamiltonian>()?;
    Ok(())
}
