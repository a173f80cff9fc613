//! Angle, delay and Doppler estimation from the radar snapshot grid.
//!
//! The chain runs in four steps:
//!
//! 1. [`sample_covariance`] of the `N_rf`-dimensional snapshots.
//! 2. [`music_refine`]: single-source beamspace MUSIC in the demodulated
//!    domain. The coarse peak on a uniform scan is polished by golden-section
//!    search and the offset `φ'` is mapped back to `φ̌ = asin(sin φ̂ + sin φ')`.
//! 3. [`beamspace_combine`] projects every snapshot on `Uᴴa(φ̌)` to get a
//!    scalar grid `y'[n, m]`.
//! 4. [`estimate_delay_doppler`] maximizes
//!    `|Σ y'[n,m] x*[n,m] e^{-j2π(nT₀ν - mΔfτ)}|` with two zero-padded FFTs
//!    and parabolic interpolation per axis.

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rustfft::FftPlanner;

use crate::array::{response_from_sine, ReductionBank};
use crate::channel::SPEED_OF_LIGHT;
use crate::ofdm::{OfdmConfig, SnapshotGrid};
use crate::{Error, Result, C64};

/// Tunables of the estimation chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorSettings {
    /// Points of the uniform MUSIC scan.
    pub music_points: usize,
    /// Half-width of the MUSIC scan in radians; `None` uses `asin β`.
    pub music_half_width: Option<f64>,
    /// Zero-padding factor on both FFT axes.
    pub fft_oversampling: usize,
    /// Golden-section termination width, radians.
    pub angle_tolerance: f64,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            music_points: 721,
            music_half_width: None,
            fft_oversampling: 4,
            angle_tolerance: 1e-6,
        }
    }
}

impl EstimatorSettings {
    pub fn validate(&self) -> Result<()> {
        if self.music_points < 3 {
            return Err(Error::Config(
                "estimator.music_points must be at least 3".into(),
            ));
        }
        if self.fft_oversampling == 0 {
            return Err(Error::Config(
                "estimator.fft_oversampling must be positive".into(),
            ));
        }
        if let Some(w) = self.music_half_width {
            if !(w > 0.0 && w <= PI / 2.0) {
                return Err(Error::Config(
                    "estimator.music_half_width must lie in (0, π/2]".into(),
                ));
            }
        }
        if !(self.angle_tolerance > 0.0) {
            return Err(Error::Config(
                "estimator.angle_tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// `R̂ = (1/NM) Σ y[n,m] yᴴ[n,m]`, exactly Hermitian.
pub fn sample_covariance(grid: &SnapshotGrid) -> Result<DMatrix<C64>> {
    let count = grid.n_symbols() * grid.n_subcarriers();
    let n_rf = grid.n_rf();
    if count == 0 || n_rf == 0 {
        return Err(Error::Domain("sample covariance of an empty grid".into()));
    }
    if count < n_rf {
        return Err(Error::Domain(format!(
            "{count} snapshots cannot estimate a {n_rf}x{n_rf} covariance"
        )));
    }
    let y = DMatrix::from_column_slice(n_rf, count, grid.values());
    let r = (&y * y.adjoint()).unscale(count as f64);
    Ok((&r + r.adjoint()).unscale(2.0))
}

/// MUSIC scan range: `n_points` uniformly spaced offsets in
/// `[-half_width, half_width]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanGrid {
    pub half_width: f64,
    pub n_points: usize,
}

impl ScanGrid {
    pub fn offsets(&self) -> impl Iterator<Item = f64> + '_ {
        let step = 2.0 * self.half_width / (self.n_points - 1) as f64;
        (0..self.n_points).map(move |i| -self.half_width + i as f64 * step)
    }
}

#[derive(Debug, Clone)]
pub struct MusicResult {
    /// Coarse angle the bank was pointed at, `φ̂`.
    pub pointed_angle: f64,
    /// Demodulated-domain peak `φ'`.
    pub refined_offset: f64,
    /// `φ̌ = asin(sin φ̂ + sin φ')`.
    pub refined_angle: f64,
    /// Scan offsets (radians) and pseudospectrum values.
    pub pseudospectrum: Vec<(f64, f64)>,
    /// Covariance eigenvalues, decreasing.
    pub eigenvalues: Vec<f64>,
    /// The coarse scan maximum sat on the edge of the scan range.
    pub peak_on_boundary: bool,
}

/// Compose a coarse angle and a demodulated offset into a physical angle.
pub fn refine_angle(pointed_angle: f64, offset: f64) -> f64 {
    (pointed_angle.sin() + offset.sin()).clamp(-1.0, 1.0).asin()
}

struct NullSpectrum<'a> {
    bank: &'a ReductionBank,
    noise: DMatrix<C64>,
}

impl NullSpectrum<'_> {
    /// `‖E_nᴴ b‖² / ‖b‖²`; zero exactly on the source direction.
    fn eval(&self, offset: f64) -> f64 {
        let b = self.bank.beamspace_steering(offset);
        let total = b.norm_squared();
        if total == 0.0 {
            return 1.0;
        }
        self.noise.ad_mul(&b).norm_squared() / total
    }
}

fn golden_section_min<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Single-source beamspace MUSIC on `R̂`.
///
/// The noise subspace is spanned by the `N_rf - 1` eigenvectors with the
/// smallest eigenvalues; the beamspace steering is `Ψᴴ a(φ')`.
pub fn music_refine(
    cov: &DMatrix<C64>,
    bank: &ReductionBank,
    grid: ScanGrid,
    tolerance: f64,
) -> Result<MusicResult> {
    let n_rf = bank.n_rf();
    if cov.nrows() != n_rf || cov.ncols() != n_rf {
        return Err(Error::Dimension(format!(
            "covariance is {}x{}, bank has {n_rf} RF chains",
            cov.nrows(),
            cov.ncols()
        )));
    }
    if n_rf < 2 {
        return Err(Error::Domain("MUSIC needs at least two RF chains".into()));
    }
    if grid.n_points < 3 || !(grid.half_width > 0.0) {
        return Err(Error::Domain(
            "MUSIC scan needs three points and a positive width".into(),
        ));
    }
    let eig = SymmetricEigen::try_new(cov.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numeric("covariance eigensolver did not converge".into()))?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "covariance has non-finite eigenvalues".into(),
        ));
    }
    let mut order: Vec<usize> = (0..n_rf).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let noise = DMatrix::from_fn(n_rf, n_rf - 1, |r, c| eig.eigenvectors[(r, order[c])]);
    let null = NullSpectrum { bank, noise };

    let offsets: Vec<f64> = grid.offsets().collect();
    let nulls: Vec<f64> = offsets.iter().map(|&o| null.eval(o)).collect();
    let best = nulls
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let peak_on_boundary = best == 0 || best == offsets.len() - 1;
    let refined_offset = if peak_on_boundary {
        offsets[best]
    } else {
        golden_section_min(
            |o| null.eval(o),
            offsets[best - 1],
            offsets[best + 1],
            tolerance,
        )
    };

    let pseudospectrum = offsets
        .iter()
        .zip(&nulls)
        .map(|(&o, &q)| (o, 1.0 / q.max(f64::MIN_POSITIVE)))
        .collect();
    let eigenvalues = order.iter().rev().map(|&i| eig.eigenvalues[i]).collect();
    Ok(MusicResult {
        pointed_angle: bank.pointed_angle(),
        refined_offset,
        refined_angle: refine_angle(bank.pointed_angle(), refined_offset),
        pseudospectrum,
        eigenvalues,
        peak_on_boundary,
    })
}

/// `y'[n,m] = aᴴ(φ̌) U y[n,m] / (aᴴ(φ̌) U Uᴴ a(φ̌))` as an `N × M` matrix.
pub fn beamspace_combine(
    grid: &SnapshotGrid,
    bank: &ReductionBank,
    refined_angle: f64,
) -> Result<DMatrix<C64>> {
    if grid.n_rf() != bank.n_rf() {
        return Err(Error::Dimension(format!(
            "grid has {} RF chains, bank has {}",
            grid.n_rf(),
            bank.n_rf()
        )));
    }
    let w = bank.project(&response_from_sine(bank.n_antennas(), refined_angle.sin()));
    let denom = w.norm_squared();
    if !(denom > 1e-12) {
        return Err(Error::Estimation(
            "angle outside filter-bank support".into(),
        ));
    }
    let weights: DVector<C64> = w.unscale(denom);
    let values: Vec<C64> = grid
        .snapshots()
        .map(|y| weights.iter().zip(y).map(|(a, b)| a.conj() * b).sum())
        .collect();
    Ok(DMatrix::from_row_slice(
        grid.n_symbols(),
        grid.n_subcarriers(),
        &values,
    ))
}

/// FFT sizes along the Doppler (symbol) and delay (subcarrier) axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FftSizes {
    pub doppler: usize,
    pub delay: usize,
}

impl FftSizes {
    pub fn oversampled(cfg: &OfdmConfig, factor: usize) -> Self {
        Self {
            doppler: cfg.n_symbols * factor,
            delay: cfg.n_subcarriers * factor,
        }
    }
}

/// Matched-filter magnitude on the FFT grid: entry `(p, q)` is
/// `|Σ z[n,m] e^{-j2π n p / N_fft} e^{+j2π m q / M_fft}|` with
/// `z = y' x*`, i.e. `ν = p / (N_fft T₀)` and `τ = q / (M_fft Δf)`.
pub fn delay_doppler_objective(
    y_prime: &DMatrix<C64>,
    symbols: &DMatrix<C64>,
    fft_sizes: FftSizes,
) -> Result<DMatrix<f64>> {
    if y_prime.shape() != symbols.shape() {
        return Err(Error::Dimension(format!(
            "y' is {:?}, symbols are {:?}",
            y_prime.shape(),
            symbols.shape()
        )));
    }
    let (n, m) = y_prime.shape();
    let FftSizes {
        doppler: nf,
        delay: mf,
    } = fft_sizes;
    if nf < n || mf < m {
        return Err(Error::Dimension(format!(
            "FFT sizes {nf}x{mf} smaller than the {n}x{m} grid"
        )));
    }
    let mut planner = FftPlanner::<f64>::new();
    let delay_fft = planner.plan_fft_inverse(mf);
    let doppler_fft = planner.plan_fft_forward(nf);

    // Row-major nf x mf work buffer; rows past n stay zero.
    let mut buf = vec![C64::new(0.0, 0.0); nf * mf];
    for r in 0..n {
        let row = &mut buf[r * mf..(r + 1) * mf];
        for c in 0..m {
            row[c] = y_prime[(r, c)] * symbols[(r, c)].conj();
        }
        delay_fft.process(row);
    }
    let mut column = vec![C64::new(0.0, 0.0); nf];
    let mut out = DMatrix::<f64>::zeros(nf, mf);
    for q in 0..mf {
        for p in 0..nf {
            column[p] = buf[p * mf + q];
        }
        doppler_fft.process(&mut column);
        for p in 0..nf {
            out[(p, q)] = column[p].norm();
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayDopplerEstimate {
    /// Two-way delay, seconds, in `[0, 1/Δf)`.
    pub delay: f64,
    /// Two-way Doppler, hertz, in `[-1/(2T₀), 1/(2T₀))`.
    pub doppler: f64,
    /// Objective value at the grid maximum.
    pub peak: f64,
    pub delay_on_boundary: bool,
    pub doppler_on_boundary: bool,
}

fn parabolic_offset(left: f64, mid: f64, right: f64) -> f64 {
    let denom = left - 2.0 * mid + right;
    // Neighbours equal to rounding: the peak is centred on the bin.
    if denom >= 0.0 || (left - right).abs() <= 1e-12 * mid.abs() {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

/// Grid maximum of [`delay_doppler_objective`] refined by three-point
/// parabolic interpolation on each axis.
///
/// The Doppler axis is circular except at the edges of
/// `[-1/(2T₀), 1/(2T₀))`; the delay axis is not interpolated at `q = 0` or
/// `q = M_fft - 1`.
pub fn estimate_delay_doppler(
    y_prime: &DMatrix<C64>,
    symbols: &DMatrix<C64>,
    cfg: &OfdmConfig,
    fft_sizes: FftSizes,
) -> Result<DelayDopplerEstimate> {
    let surface = delay_doppler_objective(y_prime, symbols, fft_sizes)?;
    let (nf, mf) = surface.shape();
    let (mut bp, mut bq, mut peak) = (0, 0, f64::NEG_INFINITY);
    for q in 0..mf {
        for p in 0..nf {
            let v = surface[(p, q)];
            if v > peak {
                peak = v;
                bp = p;
                bq = q;
            }
        }
    }
    if !peak.is_finite() {
        return Err(Error::Estimation(
            "delay-Doppler objective is not finite".into(),
        ));
    }

    let signed_p = if bp < nf / 2 {
        bp as f64
    } else {
        bp as f64 - nf as f64
    };
    let doppler_on_boundary = nf < 3 || bp == nf / 2 || bp + 1 == nf / 2;
    let doppler_bin = if doppler_on_boundary {
        signed_p
    } else {
        let left = surface[((bp + nf - 1) % nf, bq)];
        let right = surface[((bp + 1) % nf, bq)];
        signed_p + parabolic_offset(left, peak, right)
    };

    let delay_on_boundary = bq == 0 || bq + 1 == mf;
    let delay_bin = if delay_on_boundary {
        bq as f64
    } else {
        bq as f64 + parabolic_offset(surface[(bp, bq - 1)], peak, surface[(bp, bq + 1)])
    };

    Ok(DelayDopplerEstimate {
        delay: delay_bin / (mf as f64 * cfg.subcarrier_spacing),
        doppler: doppler_bin / (nf as f64 * cfg.block_duration()),
        peak,
        delay_on_boundary,
        doppler_on_boundary,
    })
}

/// `d̂ = cτ̂/2`, `v̂ = ν̂λ/2`.
pub fn to_range_velocity(delay: f64, doppler: f64, carrier_freq: f64) -> (f64, f64) {
    let lambda = SPEED_OF_LIGHT / carrier_freq;
    (SPEED_OF_LIGHT * delay / 2.0, doppler * lambda / 2.0)
}

/// Refined state of one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateEstimate {
    pub angle: f64,
    pub delay: f64,
    pub doppler: f64,
    pub range: f64,
    pub velocity: f64,
    pub objective_peak: f64,
}

/// Full output of [`estimate_state`].
#[derive(Debug, Clone)]
pub struct Refinement {
    pub music: MusicResult,
    pub delay_doppler: DelayDopplerEstimate,
    pub state: StateEstimate,
}

/// Run the whole chain on one user's snapshots.
pub fn estimate_state(
    grid: &SnapshotGrid,
    bank: &ReductionBank,
    symbols: &DMatrix<C64>,
    cfg: &OfdmConfig,
    settings: &EstimatorSettings,
) -> Result<Refinement> {
    settings.validate()?;
    let cov = sample_covariance(grid)?;
    let half_width = settings
        .music_half_width
        .unwrap_or_else(|| bank.passband_half_width());
    let scan = ScanGrid {
        half_width,
        n_points: settings.music_points,
    };
    let music = music_refine(&cov, bank, scan, settings.angle_tolerance)?;
    let y_prime = beamspace_combine(grid, bank, music.refined_angle)?;
    let sizes = FftSizes::oversampled(cfg, settings.fft_oversampling);
    let dd = estimate_delay_doppler(&y_prime, symbols, cfg, sizes)?;
    let (range, velocity) = to_range_velocity(dd.delay, dd.doppler, cfg.carrier_freq);
    Ok(Refinement {
        state: StateEstimate {
            angle: music.refined_angle,
            delay: dd.delay,
            doppler: dd.doppler,
            range,
            velocity,
            objective_peak: dd.peak,
        },
        music,
        delay_doppler: dd,
    })
}

/// CSV with header `offset_deg,angle_deg,magnitude`.
pub fn write_pseudospectrum_csv<W: Write>(result: &MusicResult, mut out: W) -> io::Result<()> {
    writeln!(out, "offset_deg,angle_deg,magnitude")?;
    for &(offset, value) in &result.pseudospectrum {
        let angle = refine_angle(result.pointed_angle, offset);
        writeln!(
            out,
            "{},{},{:e}",
            offset.to_degrees(),
            angle.to_degrees(),
            value
        )?;
    }
    Ok(())
}

/// CSV with header `doppler_hz,delay_s,magnitude`; Doppler rows in signed
/// order.
pub fn write_objective_csv<W: Write>(
    surface: &DMatrix<f64>,
    cfg: &OfdmConfig,
    mut out: W,
) -> io::Result<()> {
    let (nf, mf) = surface.shape();
    writeln!(out, "doppler_hz,delay_s,magnitude")?;
    for sp in 0..nf {
        let p = (sp + nf - nf / 2) % nf;
        let signed = if p < nf / 2 {
            p as f64
        } else {
            p as f64 - nf as f64
        };
        let nu = signed / (nf as f64 * cfg.block_duration());
        for q in 0..mf {
            let tau = q as f64 / (mf as f64 * cfg.subcarrier_spacing);
            writeln!(out, "{},{:e},{:e}", nu, tau, surface[(p, q)])?;
        }
    }
    Ok(())
}
