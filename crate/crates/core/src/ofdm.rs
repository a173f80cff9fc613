//! Sampled-domain OFDM synthesis.
//!
//! Everything here lives on the `(n, m)` grid of OFDM symbols and
//! subcarriers after standard OFDM demodulation. A target with two-way
//! delay `τ` and Doppler `ν` multiplies the symbol on `(n, m)` by
//! `exp(j2π(n T₀ ν - m Δf τ))`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::array::{array_gain, response_from_sine, ReductionBank};
use crate::channel::{link_coefficients, sample_noise, wavelength, UserState};
use crate::{Error, Result, C64};

/// Waveform and link parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfdmConfig {
    /// OFDM symbols per frame, `N`.
    pub n_symbols: usize,
    /// Subcarriers, `M`.
    pub n_subcarriers: usize,
    /// Subcarrier spacing `Δf`, Hz.
    pub subcarrier_spacing: f64,
    /// Cyclic prefix length as a fraction of `T = 1/Δf`.
    pub cp_fraction: f64,
    pub carrier_freq: f64,
    /// Total transmit power `P_t`, W.
    pub tx_power: f64,
    /// Simultaneously served users, `K`.
    pub n_users: usize,
    /// Per-antenna noise variance `σ_n²`.
    pub noise_variance: f64,
}

impl OfdmConfig {
    /// N = 16, M = 512, Δf = 1 MHz, f_c = 60 GHz, T_cp = T/4, P_t = 1 W,
    /// one user, unit noise variance.
    pub fn table_one() -> Self {
        Self {
            n_symbols: 16,
            n_subcarriers: 512,
            subcarrier_spacing: 1e6,
            cp_fraction: 0.25,
            carrier_freq: 60e9,
            tx_power: 1.0,
            n_users: 1,
            noise_variance: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_symbols == 0 || self.n_subcarriers == 0 || self.n_users == 0 {
            return Err(Error::Config(
                "ofdm.n_symbols, ofdm.n_subcarriers and ofdm.n_users must be positive".into(),
            ));
        }
        if !(self.subcarrier_spacing > 0.0 && self.subcarrier_spacing.is_finite()) {
            return Err(Error::Config(
                "ofdm.subcarrier_spacing must be positive".into(),
            ));
        }
        if !(self.cp_fraction > 0.0 && self.cp_fraction < 1.0) {
            return Err(Error::Config(format!(
                "ofdm.cp_fraction = {} must lie in (0, 1)",
                self.cp_fraction
            )));
        }
        if !(self.carrier_freq > 0.0 && self.carrier_freq.is_finite()) {
            return Err(Error::Config("ofdm.carrier_freq must be positive".into()));
        }
        if !(self.tx_power >= 0.0 && self.tx_power.is_finite()) {
            return Err(Error::Config("ofdm.tx_power must be non-negative".into()));
        }
        if !(self.noise_variance >= 0.0) {
            return Err(Error::Config(
                "ofdm.noise_variance must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// `K ≤ N_rf`, plus the waveform's own checks.
    pub fn validate_with(&self, n_rf: usize) -> Result<()> {
        self.validate()?;
        if self.n_users > n_rf {
            return Err(Error::Config(format!(
                "ofdm.n_users = {} exceeds array.n_rf = {n_rf}",
                self.n_users
            )));
        }
        Ok(())
    }

    /// Useful symbol duration `T = 1/Δf`.
    pub fn symbol_duration(&self) -> f64 {
        1.0 / self.subcarrier_spacing
    }

    pub fn cp_duration(&self) -> f64 {
        self.cp_fraction * self.symbol_duration()
    }

    /// `T₀ = T + T_cp`.
    pub fn block_duration(&self) -> f64 {
        (1.0 + self.cp_fraction) * self.symbol_duration()
    }

    pub fn bandwidth(&self) -> f64 {
        self.n_subcarriers as f64 * self.subcarrier_spacing
    }

    pub fn wavelength(&self) -> f64 {
        wavelength(self.carrier_freq)
    }

    /// Power per user stream, `P_t / K`.
    pub fn stream_power(&self) -> f64 {
        self.tx_power / self.n_users as f64
    }

    fn grid_len(&self) -> usize {
        self.n_symbols * self.n_subcarriers
    }
}

/// Information symbols `x_k[n, m]`, stored user-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolGrid {
    n_users: usize,
    n_symbols: usize,
    n_subcarriers: usize,
    values: Vec<C64>,
}

impl SymbolGrid {
    /// Wrap user-major, row-major symbol values.
    pub fn from_values(
        n_users: usize,
        n_symbols: usize,
        n_subcarriers: usize,
        values: Vec<C64>,
    ) -> Result<Self> {
        if values.len() != n_users * n_symbols * n_subcarriers {
            return Err(Error::Dimension(format!(
                "{} symbols for {n_users} users on a {n_symbols}x{n_subcarriers} grid",
                values.len()
            )));
        }
        Ok(Self {
            n_users,
            n_symbols,
            n_subcarriers,
            values,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn get(&self, user: usize, n: usize, m: usize) -> C64 {
        self.values[(user * self.n_symbols + n) * self.n_subcarriers + m]
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    /// The `N × M` stream of one user, row-major.
    pub fn stream(&self, user: usize) -> Result<&[C64]> {
        if user >= self.n_users {
            return Err(Error::Dimension(format!(
                "user {user} out of range ({} streams)",
                self.n_users
            )));
        }
        let len = self.n_symbols * self.n_subcarriers;
        Ok(&self.values[user * len..(user + 1) * len])
    }

    /// The stream of one user as an `N × M` matrix.
    pub fn user_matrix(&self, user: usize) -> Result<DMatrix<C64>> {
        let s = self.stream(user)?;
        Ok(DMatrix::from_row_slice(
            self.n_symbols,
            self.n_subcarriers,
            s,
        ))
    }

    fn check(&self, cfg: &OfdmConfig) -> Result<()> {
        if self.n_symbols != cfg.n_symbols || self.n_subcarriers != cfg.n_subcarriers {
            return Err(Error::Dimension(format!(
                "symbol grid is {}x{}, waveform expects {}x{}",
                self.n_symbols, self.n_subcarriers, cfg.n_symbols, cfg.n_subcarriers
            )));
        }
        Ok(())
    }
}

/// Uniform QPSK symbols with `|x|² = P_t / K`.
pub fn generate_symbols<R: Rng + ?Sized>(cfg: &OfdmConfig, rng: &mut R) -> SymbolGrid {
    let amp = cfg.stream_power().sqrt() * FRAC_1_SQRT_2;
    let len = cfg.n_users * cfg.grid_len();
    let values = (0..len)
        .map(|_| {
            let bits: u8 = rng.random_range(0..4);
            let re = if bits & 1 == 0 { amp } else { -amp };
            let im = if bits & 2 == 0 { amp } else { -amp };
            C64::new(re, im)
        })
        .collect();
    SymbolGrid {
        n_users: cfg.n_users,
        n_symbols: cfg.n_symbols,
        n_subcarriers: cfg.n_subcarriers,
        values,
    }
}

/// A violated timing condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimingViolation {
    /// Two-way Doppler above `Δf / 100`.
    DopplerTooLarge { doppler: f64, limit: f64 },
    /// Two-way delay longer than the cyclic prefix.
    DelayExceedsCp { delay: f64, cp: f64 },
    /// Two-way delay at or beyond `1/Δf`, where the delay phase wraps.
    DelayAmbiguous { delay: f64, limit: f64 },
}

impl std::fmt::Display for TimingViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::DopplerTooLarge { doppler, limit } => write!(
                f,
                "Doppler {:.1} Hz exceeds Δf/100 = {:.1} Hz",
                doppler, limit
            ),
            Self::DelayExceedsCp { delay, cp } => write!(
                f,
                "delay {:.2} ns exceeds cyclic prefix {:.2} ns",
                delay * 1e9,
                cp * 1e9
            ),
            Self::DelayAmbiguous { delay, limit } => write!(
                f,
                "delay {:.2} ns is not below 1/Δf = {:.2} ns",
                delay * 1e9,
                limit * 1e9
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    pub max_delay: f64,
    pub max_doppler: f64,
    pub violations: Vec<TimingViolation>,
}

impl TimingReport {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check the narrowband-Doppler, cyclic-prefix and delay-ambiguity
/// conditions for a set of users.
pub fn validate_timing(cfg: &OfdmConfig, states: &[UserState]) -> Result<TimingReport> {
    let mut max_delay = 0.0_f64;
    let mut max_doppler = 0.0_f64;
    for s in states {
        let lc = link_coefficients(s, cfg.carrier_freq)?;
        max_delay = max_delay.max(lc.delay);
        max_doppler = max_doppler.max(lc.doppler.abs());
    }
    let mut violations = Vec::new();
    let doppler_limit = cfg.subcarrier_spacing / 100.0;
    if max_doppler > doppler_limit {
        violations.push(TimingViolation::DopplerTooLarge {
            doppler: max_doppler,
            limit: doppler_limit,
        });
    }
    if max_delay > cfg.cp_duration() {
        violations.push(TimingViolation::DelayExceedsCp {
            delay: max_delay,
            cp: cfg.cp_duration(),
        });
    }
    if max_delay >= cfg.symbol_duration() {
        violations.push(TimingViolation::DelayAmbiguous {
            delay: max_delay,
            limit: cfg.symbol_duration(),
        });
    }
    Ok(TimingReport {
        max_delay,
        max_doppler,
        violations,
    })
}

/// Received radar snapshots `y[n, m] ∈ C^{N_rf}`, row-major over
/// `n → m → rf`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotGrid {
    n_symbols: usize,
    n_subcarriers: usize,
    n_rf: usize,
    values: Vec<C64>,
}

impl SnapshotGrid {
    pub fn zeros(n_symbols: usize, n_subcarriers: usize, n_rf: usize) -> Self {
        Self {
            n_symbols,
            n_subcarriers,
            n_rf,
            values: vec![C64::new(0.0, 0.0); n_symbols * n_subcarriers * n_rf],
        }
    }

    pub fn from_values(
        n_symbols: usize,
        n_subcarriers: usize,
        n_rf: usize,
        values: Vec<C64>,
    ) -> Result<Self> {
        if values.len() != n_symbols * n_subcarriers * n_rf {
            return Err(Error::Dimension(format!(
                "{} samples do not fill a {n_symbols}x{n_subcarriers}x{n_rf} grid",
                values.len()
            )));
        }
        Ok(Self {
            n_symbols,
            n_subcarriers,
            n_rf,
            values,
        })
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }

    pub fn n_rf(&self) -> usize {
        self.n_rf
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn snapshot(&self, n: usize, m: usize) -> &[C64] {
        let start = (n * self.n_subcarriers + m) * self.n_rf;
        &self.values[start..start + self.n_rf]
    }

    /// Iterate over snapshots in `(n, m)` row-major order.
    pub fn snapshots(&self) -> impl Iterator<Item = &[C64]> {
        self.values.chunks_exact(self.n_rf.max(1))
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|x| x.norm_sqr()).sum()
    }

    /// CSV dump with header `n,m,rf,re,im`, one line per sample.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "n,m,rf,re,im")?;
        for n in 0..self.n_symbols {
            for m in 0..self.n_subcarriers {
                for (rf, y) in self.snapshot(n, m).iter().enumerate() {
                    writeln!(out, "{n},{m},{rf},{:e},{:e}", y.re, y.im)?;
                }
            }
        }
        Ok(())
    }

    /// Raw dump: interleaved little-endian `f64` re/im pairs, row-major
    /// `n → m → rf`, no header.
    pub fn write_binary<W: Write>(&self, mut out: W) -> io::Result<()> {
        for y in &self.values {
            out.write_all(&y.re.to_le_bytes())?;
            out.write_all(&y.im.to_le_bytes())?;
        }
        Ok(())
    }
}

/// `exp(j2π n T₀ ν)` for each symbol and `exp(-j2π m Δf τ)` for each
/// subcarrier.
pub(crate) fn delay_doppler_phasors(
    cfg: &OfdmConfig,
    delay: f64,
    doppler: f64,
) -> (Vec<C64>, Vec<C64>) {
    let t0 = cfg.block_duration();
    let df = cfg.subcarrier_spacing;
    let slow = (0..cfg.n_symbols)
        .map(|n| C64::from_polar(1.0, 2.0 * PI * n as f64 * t0 * doppler))
        .collect();
    let fast = (0..cfg.n_subcarriers)
        .map(|m| C64::from_polar(1.0, -2.0 * PI * m as f64 * df * delay))
        .collect();
    (slow, fast)
}

/// Draw antenna noise for every snapshot and reduce it through `Uᴴ`.
/// Returns an `N_rf × NM` matrix, column `n·M + m`.
fn reduced_noise<R: Rng + ?Sized>(
    bank: &ReductionBank,
    cfg: &OfdmConfig,
    rng: &mut R,
) -> Result<Option<DMatrix<C64>>> {
    if cfg.noise_variance == 0.0 {
        return Ok(None);
    }
    let n_a = bank.n_antennas();
    let w = sample_noise(rng, &[cfg.grid_len(), n_a], cfg.noise_variance)?;
    let w = DMatrix::from_column_slice(n_a, cfg.grid_len(), &w);
    Ok(Some(bank.u().ad_mul(&w)))
}

fn check_bank(bank: &ReductionBank, cfg: &OfdmConfig) -> Result<()> {
    cfg.validate()?;
    if bank.n_rf() == 0 {
        return Err(Error::Dimension("reduction bank has no RF chains".into()));
    }
    Ok(())
}

/// Radar snapshots with every transmit beam and every echo, including the
/// cross-beam terms `aᴴ(φ_k) f(φ̂_{k'})` for `k' ≠ k`.
pub fn radar_snapshots_exact<R: Rng + ?Sized>(
    states: &[UserState],
    pointed_angles: &[f64],
    bank: &ReductionBank,
    cfg: &OfdmConfig,
    symbols: &SymbolGrid,
    rng: &mut R,
) -> Result<SnapshotGrid> {
    check_bank(bank, cfg)?;
    symbols.check(cfg)?;
    let k_users = states.len();
    if pointed_angles.len() != k_users || symbols.n_users() != k_users {
        return Err(Error::Dimension(format!(
            "{} users, {} beams, {} symbol streams",
            k_users,
            pointed_angles.len(),
            symbols.n_users()
        )));
    }
    let n_a = bank.n_antennas();
    let n_rf = bank.n_rf();
    let len = cfg.grid_len();

    let mut echoes = Vec::with_capacity(k_users);
    for state in states {
        let lc = link_coefficients(state, cfg.carrier_freq)?;
        let a = response_from_sine(n_a, state.aod.sin());
        let signature = bank.project(&a);
        let gains = pointed_angles
            .iter()
            .map(|&p| array_gain(state.aod, p, n_a))
            .collect::<Result<Vec<_>>>()?;
        let (slow, fast) = delay_doppler_phasors(cfg, lc.delay, lc.doppler);
        echoes.push((lc.h_bs, signature, gains, slow, fast));
    }

    let noise = reduced_noise(bank, cfg, rng)?;
    let mut values = vec![C64::new(0.0, 0.0); len * n_rf];
    for n in 0..cfg.n_symbols {
        for m in 0..cfg.n_subcarriers {
            let idx = n * cfg.n_subcarriers + m;
            let out = &mut values[idx * n_rf..(idx + 1) * n_rf];
            for (h_bs, signature, gains, slow, fast) in &echoes {
                let tx: C64 = gains
                    .iter()
                    .enumerate()
                    .map(|(kp, g)| g * symbols.get(kp, n, m))
                    .sum();
                let s = h_bs * slow[n] * fast[m] * tx;
                for (o, v) in out.iter_mut().zip(signature.iter()) {
                    *o += s * v;
                }
            }
            if let Some(w) = &noise {
                for (o, v) in out.iter_mut().zip(w.column(idx).iter()) {
                    *o += v;
                }
            }
        }
    }
    SnapshotGrid::from_values(cfg.n_symbols, cfg.n_subcarriers, n_rf, values)
}

/// Radar snapshots of a single user with cross-beam terms dropped:
/// `y[n,m] = Uᴴ(h' g_t a(φ) x[n,m] e^{j2π(nT₀ν - mΔfτ)} + w[n,m])`, with
/// the transmit beam pointed at the bank's coarse angle.
pub fn radar_snapshots_single<R: Rng + ?Sized>(
    state: &UserState,
    bank: &ReductionBank,
    cfg: &OfdmConfig,
    symbols: &SymbolGrid,
    user: usize,
    rng: &mut R,
) -> Result<SnapshotGrid> {
    check_bank(bank, cfg)?;
    symbols.check(cfg)?;
    let stream = symbols.stream(user)?;
    let n_a = bank.n_antennas();
    let n_rf = bank.n_rf();
    let lc = link_coefficients(state, cfg.carrier_freq)?;
    let g_t = array_gain(state.aod, bank.pointed_angle(), n_a)?;
    let signature: DVector<C64> = bank.project(&response_from_sine(n_a, state.aod.sin()));
    let (slow, fast) = delay_doppler_phasors(cfg, lc.delay, lc.doppler);
    let amp = lc.h_bs * g_t;

    let noise = reduced_noise(bank, cfg, rng)?;
    let mut values = vec![C64::new(0.0, 0.0); cfg.grid_len() * n_rf];
    for (n, &sv) in slow.iter().enumerate() {
        let row_amp = amp * sv;
        for (m, &fv) in fast.iter().enumerate() {
            let idx = n * cfg.n_subcarriers + m;
            let s = row_amp * fv * stream[idx];
            let out = &mut values[idx * n_rf..(idx + 1) * n_rf];
            for (o, v) in out.iter_mut().zip(signature.iter()) {
                *o = s * v;
            }
            if let Some(w) = &noise {
                for (o, v) in out.iter_mut().zip(w.column(idx).iter()) {
                    *o += v;
                }
            }
        }
    }
    SnapshotGrid::from_values(cfg.n_symbols, cfg.n_subcarriers, n_rf, values)
}

/// Signal at the user after OFDM demodulation, `N × M`:
/// `h g_t g_r x[n,m] e^{j2π(nT₀ν/2 - mΔfτ/2)} + w[n,m]`.
#[allow(clippy::too_many_arguments)]
pub fn ue_received<R: Rng + ?Sized>(
    state: &UserState,
    pointed_angle: f64,
    n_antennas: usize,
    rx_gain: C64,
    cfg: &OfdmConfig,
    symbols: &SymbolGrid,
    user: usize,
    rng: &mut R,
) -> Result<DMatrix<C64>> {
    cfg.validate()?;
    symbols.check(cfg)?;
    let stream = symbols.stream(user)?;
    let lc = link_coefficients(state, cfg.carrier_freq)?;
    let g_t = array_gain(state.aod, pointed_angle, n_antennas)?;
    let (slow, fast) = delay_doppler_phasors(cfg, lc.delay / 2.0, lc.doppler / 2.0);
    let amp = lc.h_ue * g_t * rx_gain;
    let noise = sample_noise(rng, &[cfg.n_symbols, cfg.n_subcarriers], cfg.noise_variance)?;
    Ok(DMatrix::from_fn(
        cfg.n_symbols,
        cfg.n_subcarriers,
        |n, m| {
            let idx = n * cfg.n_subcarriers + m;
            amp * slow[n] * fast[m] * stream[idx] + noise[idx]
        },
    ))
}
