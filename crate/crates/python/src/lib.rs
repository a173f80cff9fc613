//! Python bindings for the beam refinement simulator.
//!
//! Vectors and matrices cross the boundary as Python lists of `complex` or
//! `float`; angles are radians unless a name ends in `_deg`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use beamrefine_core::{array, channel, estimator, experiments, metrics, ofdm, Error, C64};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Numeric(_) | Error::Estimation(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Uniform linear array with `n_rf` RF chains and a Slepian passband of
/// half-width `beta` in sine space.
#[pyclass(name = "ArrayConfig", module = "beamrefine", skip_from_py_object)]
#[derive(Clone)]
pub struct PyArrayConfig {
    inner: array::ArrayConfig,
}

#[pymethods]
impl PyArrayConfig {
    #[new]
    #[pyo3(signature = (n_antennas = 64, n_rf = 4, beta = None))]
    fn new(n_antennas: usize, n_rf: usize, beta: Option<f64>) -> PyResult<Self> {
        let beta = beta.unwrap_or(n_rf as f64 / n_antennas.max(1) as f64);
        let inner = array::ArrayConfig::new(n_antennas, n_rf, beta).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_antennas(&self) -> usize {
        self.inner.n_antennas
    }

    #[getter]
    fn n_rf(&self) -> usize {
        self.inner.n_rf
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }

    /// Half-width of the passband in radians, `asin(beta)`.
    fn passband_half_width(&self) -> f64 {
        self.inner.passband_half_width()
    }

    fn __repr__(&self) -> String {
        format!(
            "ArrayConfig(n_antennas={}, n_rf={}, beta={})",
            self.inner.n_antennas, self.inner.n_rf, self.inner.beta
        )
    }
}

/// OFDM waveform and receiver noise.
#[pyclass(name = "OfdmConfig", module = "beamrefine", skip_from_py_object)]
#[derive(Clone)]
pub struct PyOfdmConfig {
    inner: ofdm::OfdmConfig,
}

#[pymethods]
impl PyOfdmConfig {
    #[new]
    #[pyo3(signature = (
        n_symbols = 16,
        n_subcarriers = 512,
        subcarrier_spacing = 1e6,
        cp_fraction = 0.25,
        carrier_freq = 60e9,
        tx_power = 1.0,
        n_users = 1,
        noise_variance = 1.0,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n_symbols: usize,
        n_subcarriers: usize,
        subcarrier_spacing: f64,
        cp_fraction: f64,
        carrier_freq: f64,
        tx_power: f64,
        n_users: usize,
        noise_variance: f64,
    ) -> PyResult<Self> {
        let inner = ofdm::OfdmConfig {
            n_symbols,
            n_subcarriers,
            subcarrier_spacing,
            cp_fraction,
            carrier_freq,
            tx_power,
            n_users,
            noise_variance,
        };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_symbols(&self) -> usize {
        self.inner.n_symbols
    }

    #[getter]
    fn n_subcarriers(&self) -> usize {
        self.inner.n_subcarriers
    }

    #[getter]
    fn subcarrier_spacing(&self) -> f64 {
        self.inner.subcarrier_spacing
    }

    #[getter]
    fn carrier_freq(&self) -> f64 {
        self.inner.carrier_freq
    }

    #[getter]
    fn tx_power(&self) -> f64 {
        self.inner.tx_power
    }

    #[getter]
    fn n_users(&self) -> usize {
        self.inner.n_users
    }

    #[getter]
    fn noise_variance(&self) -> f64 {
        self.inner.noise_variance
    }

    #[setter]
    fn set_noise_variance(&mut self, value: f64) -> PyResult<()> {
        let mut next = self.inner;
        next.noise_variance = value;
        next.validate().map_err(to_py)?;
        self.inner = next;
        Ok(())
    }

    /// OFDM block duration including the cyclic prefix, seconds.
    fn block_duration(&self) -> f64 {
        self.inner.block_duration()
    }

    fn wavelength(&self) -> f64 {
        self.inner.wavelength()
    }

    fn __repr__(&self) -> String {
        format!(
            "OfdmConfig(n_symbols={}, n_subcarriers={}, subcarrier_spacing={}, carrier_freq={}, noise_variance={})",
            self.inner.n_symbols,
            self.inner.n_subcarriers,
            self.inner.subcarrier_spacing,
            self.inner.carrier_freq,
            self.inner.noise_variance
        )
    }
}

/// Kinematic and radar state of one user.
#[pyclass(name = "UserState", module = "beamrefine", skip_from_py_object)]
#[derive(Clone)]
pub struct PyUserState {
    inner: channel::UserState,
}

#[pymethods]
impl PyUserState {
    #[new]
    #[pyo3(signature = (aod, range, speed, rcs, tx_phase = 0.0, bs_phase = 0.0))]
    fn new(
        aod: f64,
        range: f64,
        speed: f64,
        rcs: f64,
        tx_phase: f64,
        bs_phase: f64,
    ) -> PyResult<Self> {
        let inner = channel::UserState::new(aod, range, speed, rcs)
            .map_err(to_py)?
            .with_phases(tx_phase, bs_phase);
        Ok(Self { inner })
    }

    #[getter]
    fn aod(&self) -> f64 {
        self.inner.aod
    }

    #[getter]
    fn range(&self) -> f64 {
        self.inner.range
    }

    #[getter]
    fn speed(&self) -> f64 {
        self.inner.speed
    }

    #[getter]
    fn rcs(&self) -> f64 {
        self.inner.rcs
    }

    fn __repr__(&self) -> String {
        format!(
            "UserState(aod={}, range={}, speed={}, rcs={})",
            self.inner.aod, self.inner.range, self.inner.speed, self.inner.rcs
        )
    }
}

/// Fixed Slepian filter bank of an array.
#[pyclass(name = "SlepianBank", module = "beamrefine", frozen)]
pub struct PySlepianBank {
    inner: array::SlepianBank,
}

#[pymethods]
impl PySlepianBank {
    /// `Ψ` as a list of rows.
    fn psi(&self) -> Vec<Vec<C64>> {
        let psi = self.inner.psi();
        psi.row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    /// In-band energy fraction of each column.
    fn concentrations(&self) -> Vec<f64> {
        self.inner.concentrations().to_vec()
    }

    /// `|ψ_colᴴ a(angle)|²`.
    fn beam_pattern(&self, column: usize, angle: f64) -> PyResult<f64> {
        self.inner.beam_pattern(column, angle).map_err(to_py)
    }
}

#[pyclass(name = "LinkCoefficients", module = "beamrefine", frozen, get_all)]
pub struct PyLinkCoefficients {
    h_ue: C64,
    h_bs: C64,
    delay: f64,
    doppler: f64,
}

#[pyclass(name = "LinkBudget", module = "beamrefine", frozen, get_all)]
pub struct PyLinkBudget {
    snr_ue: f64,
    snr_bs: f64,
    snr_bbf: f64,
    spectral_efficiency: f64,
    rx_gain_sq: f64,
}

/// Outcome of one refinement.
#[pyclass(name = "Refinement", module = "beamrefine", frozen, get_all)]
pub struct PyRefinement {
    pointed_angle: f64,
    angle: f64,
    delay: f64,
    doppler: f64,
    range: f64,
    velocity: f64,
    peak_on_boundary: bool,
}

#[pyclass(name = "SweepPoint", module = "beamrefine", frozen, get_all)]
pub struct PySweepPoint {
    snr_bbf_db: f64,
    epsilon_deg: f64,
    se_refined: f64,
    se_unrefined: f64,
    rmse_angle_deg: f64,
    rmse_range_m: f64,
    rmse_velocity_mps: f64,
    failures: usize,
    n_trials: usize,
}

/// `a(angle)` for an `n`-element half-wavelength array.
#[pyfunction]
fn steering_vector(n: usize, angle: f64) -> PyResult<Vec<C64>> {
    let a = array::steering_vector(n, angle).map_err(to_py)?;
    Ok(a.entries().iter().copied().collect())
}

/// Transmit gain `aᴴ(true_angle) f(pointed_angle)`.
#[pyfunction]
fn array_gain(true_angle: f64, pointed_angle: f64, n: usize) -> PyResult<C64> {
    array::array_gain(true_angle, pointed_angle, n).map_err(to_py)
}

#[pyfunction]
fn concentration_matrix(n: usize, beta: f64) -> PyResult<Vec<Vec<f64>>> {
    let g = array::concentration_matrix(n, beta).map_err(to_py)?;
    Ok(g.row_iter().map(|r| r.iter().copied().collect()).collect())
}

#[pyfunction]
fn slepian_bank(config: PyRef<'_, PyArrayConfig>) -> PyResult<PySlepianBank> {
    let inner = array::slepian_bank(&config.inner).map_err(to_py)?;
    Ok(PySlepianBank { inner })
}

#[pyfunction]
fn link_coefficients(
    state: PyRef<'_, PyUserState>,
    carrier_freq: f64,
) -> PyResult<PyLinkCoefficients> {
    let lc = channel::link_coefficients(&state.inner, carrier_freq).map_err(to_py)?;
    Ok(PyLinkCoefficients {
        h_ue: lc.h_ue,
        h_bs: lc.h_bs,
        delay: lc.delay,
        doppler: lc.doppler,
    })
}

#[pyfunction]
fn link_budget(
    state: PyRef<'_, PyUserState>,
    ofdm: PyRef<'_, PyOfdmConfig>,
    array: PyRef<'_, PyArrayConfig>,
    g_t: C64,
    rx_gain_sq: f64,
) -> PyResult<PyLinkBudget> {
    let b = metrics::link_budget(&state.inner, &ofdm.inner, &array.inner, g_t, rx_gain_sq)
        .map_err(to_py)?;
    Ok(PyLinkBudget {
        snr_ue: b.snr_ue,
        snr_bs: b.snr_bs,
        snr_bbf: b.snr_bbf,
        spectral_efficiency: b.spectral_efficiency,
        rx_gain_sq: b.rx_gain_sq,
    })
}

/// Synthesize the radar echo of `state` with the beam pointed at
/// `pointed_angle`, then refine angle, delay and Doppler.
///
/// With `snr_bbf_db=None` the echo is noiseless; otherwise the noise
/// variance is set to reach that SNR before beamforming.
#[pyfunction]
#[pyo3(signature = (state, pointed_angle, array = None, ofdm = None, snr_bbf_db = None, seed = 0))]
fn refine(
    py: Python<'_>,
    state: PyRef<'_, PyUserState>,
    pointed_angle: f64,
    array: Option<PyRef<'_, PyArrayConfig>>,
    ofdm: Option<PyRef<'_, PyOfdmConfig>>,
    snr_bbf_db: Option<f64>,
    seed: u64,
) -> PyResult<PyRefinement> {
    let state = state.inner;
    let array_cfg = array
        .map(|a| a.inner)
        .unwrap_or_else(array::ArrayConfig::table_one);
    let mut cfg = ofdm
        .map(|o| o.inner)
        .unwrap_or_else(ofdm::OfdmConfig::table_one);
    cfg.noise_variance = match snr_bbf_db {
        Some(db) => metrics::noise_variance_for_snr_bbf(&state, &cfg, metrics::db_to_linear(db))
            .map_err(to_py)?,
        None => 0.0,
    };
    let result = py.detach(move || -> beamrefine_core::Result<estimator::Refinement> {
        let bank = array::reduction_matrix(&array_cfg, pointed_angle)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let symbols = ofdm::generate_symbols(&cfg, &mut rng);
        let grid = ofdm::radar_snapshots_single(&state, &bank, &cfg, &symbols, 0, &mut rng)?;
        let x = symbols.user_matrix(0)?;
        estimator::estimate_state(
            &grid,
            &bank,
            &x,
            &cfg,
            &estimator::EstimatorSettings::default(),
        )
    });
    let r = result.map_err(to_py)?;
    Ok(PyRefinement {
        pointed_angle,
        angle: r.state.angle,
        delay: r.state.delay,
        doppler: r.state.doppler,
        range: r.state.range,
        velocity: r.state.velocity,
        peak_on_boundary: r.music.peak_on_boundary,
    })
}

/// Monte-Carlo sweep over SNR and coarse-beam error; one point per pair.
#[pyfunction]
#[pyo3(signature = (
    snr_bbf_db,
    epsilons_deg,
    n_trials,
    seed = 1,
    array = None,
    ofdm = None,
    aod_half_range_deg = 30.0,
    rx_gain_sq = 4.0,
))]
#[allow(clippy::too_many_arguments)]
fn run_sweep(
    py: Python<'_>,
    snr_bbf_db: Vec<f64>,
    epsilons_deg: Vec<f64>,
    n_trials: usize,
    seed: u64,
    array: Option<PyRef<'_, PyArrayConfig>>,
    ofdm: Option<PyRef<'_, PyOfdmConfig>>,
    aod_half_range_deg: f64,
    rx_gain_sq: f64,
) -> PyResult<Vec<PySweepPoint>> {
    let spec = experiments::SweepSpec {
        snr_bbf_db,
        epsilons_deg,
        n_trials,
        seed,
        array: array
            .map(|a| a.inner)
            .unwrap_or_else(array::ArrayConfig::table_one),
        ofdm: ofdm
            .map(|o| o.inner)
            .unwrap_or_else(ofdm::OfdmConfig::table_one),
        geometry: experiments::UserGeometry {
            aod_half_range: aod_half_range_deg.to_radians(),
            ..experiments::UserGeometry::default()
        },
        rx_gain_sq,
        ..experiments::SweepSpec::default()
    };
    let result = py.detach(|| experiments::run_sweep(&spec)).map_err(to_py)?;
    Ok(result
        .points
        .into_iter()
        .map(|p| PySweepPoint {
            snr_bbf_db: p.snr_bbf_db,
            epsilon_deg: p.epsilon_deg,
            se_refined: p.se_refined,
            se_unrefined: p.se_unrefined,
            rmse_angle_deg: p.rmse_angle_deg,
            rmse_range_m: p.rmse_range_m,
            rmse_velocity_mps: p.rmse_velocity_mps,
            failures: p.failures,
            n_trials: p.n_trials,
        })
        .collect())
}

#[pymodule]
fn beamrefine(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyArrayConfig>()?;
    m.add_class::<PyOfdmConfig>()?;
    m.add_class::<PyUserState>()?;
    m.add_class::<PySlepianBank>()?;
    m.add_class::<PyLinkCoefficients>()?;
    m.add_class::<PyLinkBudget>()?;
    m.add_class::<PyRefinement>()?;
    m.add_class::<PySweepPoint>()?;
    m.add_function(wrap_pyfunction!(steering_vector, m)?)?;
    m.add_function(wrap_pyfunction!(array_gain, m)?)?;
    m.add_function(wrap_pyfunction!(concentration_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(slepian_bank, m)?)?;
    m.add_function(wrap_pyfunction!(link_coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(link_budget, m)?)?;
    m.add_function(wrap_pyfunction!(refine, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    Ok(())
}
