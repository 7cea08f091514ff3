//! Python bindings for the Walker downlink simulator.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use walker_core::bounds::{bound_report, estimate_block_constants, lattice_arc_count, verify_block};
use walker_core::cli::RunConfig;
use walker_core::geometry::horizon_distance;
use walker_core::link::evaluate_drop;
use walker_core::montecarlo::{run_sweep, write_sweep_csv, SweepConfig};
use walker_core::rng::{point_key, DropStreams};
use walker_core::{ActivityPolicy, BlockConstants, Error, LinkModel, VerifyStatus};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(_) | Error::DegenerateLatitude { .. } => PyValueError::new_err(e.to_string()),
        Error::Io(_) | Error::Csv(_) => PyIOError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn policy(s: &str, scaling_c: f64) -> PyResult<ActivityPolicy> {
    ActivityPolicy::parse(s, scaling_c).map_err(to_py)
}

/// Link model built from a TOML run configuration (empty for the defaults).
#[pyclass(frozen)]
struct Model {
    config: RunConfig,
    inner: LinkModel,
}

#[pymethods]
impl Model {
    #[new]
    #[pyo3(signature = (config_toml = ""))]
    fn new(config_toml: &str) -> PyResult<Self> {
        let config: RunConfig = toml::from_str(config_toml).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let inner = config.model().map_err(to_py)?;
        Ok(Self { config, inner })
    }

    #[getter]
    fn horizon_km(&self) -> f64 {
        horizon_distance(&self.inner.walker)
    }

    #[getter]
    fn min_distance_km(&self) -> f64 {
        self.inner.walker.min_distance_km()
    }

    #[getter]
    fn noise_power(&self) -> f64 {
        self.inner.channel.noise_power
    }

    /// One drop at `(n_orbits, n_sats_per_orbit)`, keyed by seed and index.
    #[pyo3(signature = (n_orbits, n_sats_per_orbit, policy = "full", seed = 1, index = 0))]
    fn drop(&self, n_orbits: usize, n_sats_per_orbit: usize, policy: &str, seed: u64, index: u64) -> PyResult<Drop> {
        let p = self::policy(policy, self.config.scaling_c)?;
        let model = self.inner.with_size(n_orbits, n_sats_per_orbit);
        model.walker.validate().map_err(to_py)?;
        let r = evaluate_drop(&model, &p, &DropStreams::new(seed, point_key(n_orbits, n_sats_per_orbit), index));
        Ok(Drop {
            serving_distance_km: r.serving_distance_km,
            signal: r.signal,
            interference: r.interference,
            sinr: r.sinr,
            n_visible: r.n_visible,
            n_active_interferers: r.n_active_interferers,
        })
    }

    /// Monte Carlo sweep over `ladder` and `policies`, one point per pair.
    #[pyo3(signature = (ladder, policies = vec!["full".to_string()], drops = 1000, max_drops = None, seed = 1, threads = None))]
    fn sweep(
        &self,
        py: Python<'_>,
        ladder: Vec<(usize, usize)>,
        policies: Vec<String>,
        drops: u64,
        max_drops: Option<u64>,
        seed: u64,
        threads: Option<usize>,
    ) -> PyResult<Vec<SweepPoint>> {
        let policies = policies
            .iter()
            .map(|s| policy(s, self.config.scaling_c))
            .collect::<PyResult<Vec<_>>>()?;
        let config = SweepConfig {
            constellations: ladder,
            policies,
            tau_db: self.config.tau_db,
            base_drops: drops,
            max_drops: max_drops.unwrap_or(drops).max(drops),
            refine_threshold: self.config.refine_threshold,
            master_seed: seed,
            threads,
        };
        let out = py.detach(|| run_sweep(&self.inner, &config)).map_err(to_py)?;
        if let Some(f) = out.failures.first() {
            return Err(PyValueError::new_err(format!("{f:?}")));
        }
        Ok(out.points.into_iter().map(|p| SweepPoint { inner: p }).collect())
    }

    /// Estimate the block certificate on a `grid_res` x `grid_res` phase grid.
    #[pyo3(signature = (grid_res = 1024))]
    fn certificate(&self, py: Python<'_>, grid_res: usize) -> PyResult<Certificate> {
        let c = py
            .detach(|| estimate_block_constants(&self.inner.walker, &self.inner.user, grid_res))
            .map_err(to_py)?;
        Ok(Certificate { inner: c })
    }

    /// Analytic bounds at one size; `None` fields mark vacuous bounds.
    #[pyo3(signature = (certificate, n_orbits, n_sats_per_orbit, q = 1.0))]
    fn bounds(&self, certificate: &Certificate, n_orbits: usize, n_sats_per_orbit: usize, q: f64) -> Bounds {
        let m = self.inner.with_size(n_orbits, n_sats_per_orbit);
        let r = bound_report(
            &certificate.inner,
            &m.walker,
            &m.channel,
            &m.fading,
            10f64.powf(self.config.tau_db / 10.0),
            q,
        );
        Bounds {
            n_total: r.n_total,
            m: r.m,
            pcov: r.pcov_bound,
            cerg_bits: r.cerg_bound_bits,
            pcov_thinned: r.pcov_thinned_bound,
            sinr: r.sinr_bound,
            k_thin: r.k_thin,
            k_sinr: r.k_sinr,
            status: r.status,
        }
    }

    /// Check the certificate on a `grid` x `grid` phase lattice; returns
    /// `(passed, min_count, required)`.
    #[pyo3(signature = (certificate, n_orbits, n_sats_per_orbit, grid = 33))]
    fn verify(
        &self,
        py: Python<'_>,
        certificate: &Certificate,
        n_orbits: usize,
        n_sats_per_orbit: usize,
        grid: usize,
    ) -> (bool, usize, usize) {
        let walker = self.inner.walker.with_size(n_orbits, n_sats_per_orbit);
        let r = py.detach(|| verify_block(&certificate.inner, &walker, &self.inner.user, grid));
        (r.status == VerifyStatus::Passed, r.min_count, r.required)
    }
}

#[pyclass(frozen, get_all)]
struct Drop {
    serving_distance_km: Option<f64>,
    signal: f64,
    interference: f64,
    sinr: f64,
    n_visible: usize,
    n_active_interferers: usize,
}

#[pyclass(frozen)]
struct SweepPoint {
    inner: walker_core::SweepPointResult,
}

#[pymethods]
impl SweepPoint {
    #[getter]
    fn n_orbits(&self) -> usize {
        self.inner.n_orbits
    }
    #[getter]
    fn n_sats_per_orbit(&self) -> usize {
        self.inner.n_sats_per_orbit
    }
    #[getter]
    fn n_total(&self) -> usize {
        self.inner.n_total
    }
    #[getter]
    fn policy(&self) -> &str {
        &self.inner.policy_id
    }
    #[getter]
    fn q(&self) -> f64 {
        self.inner.effective_q
    }
    #[getter]
    fn p_cov(&self) -> f64 {
        self.inner.p_cov
    }
    #[getter]
    fn p_cov_ci(&self) -> (f64, f64) {
        (self.inner.p_cov_ci.lo, self.inner.p_cov_ci.hi)
    }
    #[getter]
    fn c_erg_bits(&self) -> f64 {
        self.inner.c_erg_bits
    }
    #[getter]
    fn mean_sinr(&self) -> f64 {
        self.inner.mean_sinr
    }
    #[getter]
    fn mean_interference_over_p(&self) -> f64 {
        self.inner.mean_interference_over_p
    }
    #[getter]
    fn drops(&self) -> u64 {
        self.inner.drops_used
    }

    /// This point as one sweep CSV row, header included.
    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, std::slice::from_ref(&self.inner)).map_err(to_py)?;
        Ok(String::from_utf8_lossy(&buf).into_owned())
    }

    fn __repr__(&self) -> String {
        format!(
            "SweepPoint(n_o={}, n_s={}, policy={:?}, p_cov={:.4}, drops={})",
            self.inner.n_orbits, self.inner.n_sats_per_orbit, self.inner.policy_id, self.inner.p_cov, self.inner.drops_used
        )
    }
}

#[pyclass(frozen)]
struct Certificate {
    inner: BlockConstants,
}

#[pymethods]
impl Certificate {
    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(Self {
            inner: BlockConstants::from_json(s).map_err(to_py)?,
        })
    }
    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }
    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }
    #[getter]
    fn n0(&self) -> usize {
        self.inner.n0
    }
    #[getter]
    fn d1_km(&self) -> f64 {
        self.inner.d1_km
    }
    #[getter]
    fn d2_km(&self) -> f64 {
        self.inner.d2_km
    }
    #[getter]
    fn geometry_hash(&self) -> &str {
        &self.inner.geometry_hash
    }
    fn __repr__(&self) -> String {
        format!(
            "Certificate(beta={:.6e}, n0={}, d1_km={:.3}, d2_km={:.3})",
            self.inner.beta, self.inner.n0, self.inner.d1_km, self.inner.d2_km
        )
    }
}

#[pyclass(frozen, get_all)]
struct Bounds {
    n_total: usize,
    m: i64,
    pcov: Option<f64>,
    cerg_bits: Option<f64>,
    pcov_thinned: Option<f64>,
    sinr: Option<f64>,
    k_thin: f64,
    k_sinr: f64,
    status: String,
}

/// Number of points of the shifted `n`-lattice on the circle inside `[0, delta]`.
#[pyfunction(name = "lattice_arc_count")]
fn py_lattice_arc_count(n: usize, shift: f64, delta: f64) -> usize {
    lattice_arc_count(n, shift, delta)
}

#[pymodule]
fn walker_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", walker_core::cli::VERSION)?;
    m.add_class::<Model>()?;
    m.add_class::<Drop>()?;
    m.add_class::<SweepPoint>()?;
    m.add_class::<Certificate>()?;
    m.add_class::<Bounds>()?;
    m.add_function(wrap_pyfunction!(py_lattice_arc_count, m)?)?;
    Ok(())
}
