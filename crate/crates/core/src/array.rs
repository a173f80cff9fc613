//! Uniform linear array geometry and the hybrid receive front end.
//!
//! The receive front end maps `N_a` antennas onto `N_rf` RF chains through
//! `U(φ̂) = D(φ̂)Ψ`: a diagonal network of phase shifters `D(φ̂)` that moves
//! directions around the coarse angle `φ̂` to broadside, followed by a fixed
//! bank `Ψ` of Slepian low-pass spatial filters.
//!
//! All angles are in radians. Array element `i` (zero-based) of a
//! half-wavelength ULA has response `exp(jπ i sin ξ)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result, C64};

const INVARIANT_SLACK: f64 = 1e-9;

/// Static array parameters: antennas, RF chains and Slepian bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayConfig {
    pub n_antennas: usize,
    pub n_rf: usize,
    /// Half-width of the Slepian passband in `sin` space, i.e. the band
    /// `γ = π sin φ ∈ [-βπ, βπ]`.
    pub beta: f64,
}

impl ArrayConfig {
    pub fn new(n_antennas: usize, n_rf: usize, beta: f64) -> Result<Self> {
        let cfg = Self {
            n_antennas,
            n_rf,
            beta,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// 64 antennas, 4 RF chains, `β = N_rf / N_a`.
    pub fn table_one() -> Self {
        Self {
            n_antennas: 64,
            n_rf: 4,
            beta: 4.0 / 64.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_antennas == 0 || self.n_rf == 0 {
            return Err(Error::Config(
                "array.n_antennas and array.n_rf must be positive".into(),
            ));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Config(format!(
                "array.beta = {} must lie in (0, 1]",
                self.beta
            )));
        }
        if self.n_rf > self.n_antennas {
            return Err(Error::Config(format!(
                "array.n_rf = {} exceeds array.n_antennas = {}",
                self.n_rf, self.n_antennas
            )));
        }
        let n = self.n_antennas as f64;
        if self.beta * n < 1.0 - INVARIANT_SLACK {
            return Err(Error::Config(format!(
                "array.beta = {} is below 1/n_antennas = {}",
                self.beta,
                1.0 / n
            )));
        }
        if self.n_rf as f64 > self.beta * n + INVARIANT_SLACK {
            return Err(Error::Config(format!(
                "array.n_rf = {} exceeds beta * n_antennas = {}",
                self.n_rf,
                self.beta * n
            )));
        }
        Ok(())
    }

    /// Angular half-width `asin β` of the Slepian passband.
    pub fn passband_half_width(&self) -> f64 {
        self.beta.asin()
    }
}

fn check_angle(angle: f64) -> Result<()> {
    if angle.is_finite() && angle.abs() <= PI / 2.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "angle {angle} rad lies outside [-π/2, π/2]"
        )))
    }
}

/// Array response for a direction given by its sine, `[a]_i = exp(jπ i s)`.
///
/// `sine` is not required to lie in `[-1, 1]`; demodulated directions can
/// leave that range.
pub fn response_from_sine(n: usize, sine: f64) -> DVector<C64> {
    DVector::from_fn(n, |i, _| C64::from_polar(1.0, PI * i as f64 * sine))
}

/// ULA array response `a(ξ)` for a physical direction.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    angle: f64,
    entries: DVector<C64>,
}

impl SteeringVector {
    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn entries(&self) -> &DVector<C64> {
        &self.entries
    }

    pub fn into_entries(self) -> DVector<C64> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn steering_vector(n: usize, angle: f64) -> Result<SteeringVector> {
    check_angle(angle)?;
    Ok(SteeringVector {
        angle,
        entries: response_from_sine(n, angle.sin()),
    })
}

/// Unit-norm transmit beam `f(φ̂) = a(φ̂)/√N_a`.
pub fn tx_beamformer(n: usize, angle: f64) -> Result<DVector<C64>> {
    let a = steering_vector(n, angle)?.into_entries();
    Ok(a.unscale((n as f64).sqrt()))
}

/// Transmit gain `g_t = aᴴ(φ) f(φ̂)` seen by a user at `true_angle` when the
/// beam points at `pointed_angle`. `|g_t|² ≤ n`.
pub fn array_gain(true_angle: f64, pointed_angle: f64, n: usize) -> Result<C64> {
    let a = steering_vector(n, true_angle)?;
    let f = tx_beamformer(n, pointed_angle)?;
    Ok(a.entries().dotc(&f))
}

/// Diagonal of the phase-shifter network, `[D]_ii = exp(jπ i sin φ̂)`, so
/// that `Dᴴ a(φ) = a(asin(sin φ - sin φ̂))`.
pub fn phase_shift_network(n: usize, pointed_angle: f64) -> Result<DVector<C64>> {
    check_angle(pointed_angle)?;
    Ok(response_from_sine(n, pointed_angle.sin()))
}

/// Concentration matrix `Γ = (1/2π) ∫_{-βπ}^{βπ} a(γ) aᴴ(γ) dγ` in closed
/// form: `β` on the diagonal, `sin((p-q)βπ) / ((p-q)π)` elsewhere.
pub fn concentration_matrix(n: usize, beta: f64) -> Result<DMatrix<f64>> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Domain(format!("beta = {beta} must lie in (0, 1]")));
    }
    Ok(DMatrix::from_fn(n, n, |p, q| {
        if p == q {
            beta
        } else {
            let k = p as f64 - q as f64;
            (k * beta * PI).sin() / (k * PI)
        }
    }))
}

/// The first `N_rf` Slepian sequences of the array.
#[derive(Debug, Clone)]
pub struct SlepianBank {
    config: ArrayConfig,
    psi: DMatrix<C64>,
    concentrations: Vec<f64>,
    spectrum: Vec<f64>,
}

impl SlepianBank {
    pub fn config(&self) -> &ArrayConfig {
        &self.config
    }

    /// `N_a × N_rf` matrix with orthonormal columns.
    pub fn psi(&self) -> &DMatrix<C64> {
        &self.psi
    }

    /// In-band energy fraction of each column, decreasing.
    pub fn concentrations(&self) -> &[f64] {
        &self.concentrations
    }

    /// All eigenvalues of `Γ`, decreasing.
    pub fn full_spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    /// Power pattern `|ψ_iᴴ a(angle)|²` of column `i`.
    pub fn beam_pattern(&self, column: usize, angle: f64) -> Result<f64> {
        if column >= self.psi.ncols() {
            return Err(Error::Dimension(format!(
                "Slepian column {column} out of range (bank has {})",
                self.psi.ncols()
            )));
        }
        let a = steering_vector(self.config.n_antennas, angle)?;
        Ok(self.psi.column(column).dotc(a.entries()).norm_sqr())
    }

    /// Beamspace steering `b(φ') = Ψᴴ a(φ')` for a demodulated direction
    /// given by its sine.
    pub fn beamspace_response(&self, sine: f64) -> DVector<C64> {
        let a = response_from_sine(self.config.n_antennas, sine);
        self.psi.ad_mul(&a)
    }
}

/// Eigenvectors of `Γ(N_a, β)` for the `N_rf` largest eigenvalues.
///
/// Each column is rotated so that its largest-magnitude entry is real and
/// positive; ties go to the lowest index.
pub fn slepian_bank(cfg: &ArrayConfig) -> Result<SlepianBank> {
    cfg.validate()?;
    let gamma = concentration_matrix(cfg.n_antennas, cfg.beta)?;
    let eig = SymmetricEigen::try_new(gamma, f64::EPSILON, 10_000).ok_or_else(|| {
        Error::Numeric("concentration matrix eigensolver did not converge".into())
    })?;

    let mut order: Vec<usize> = (0..cfg.n_antennas).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let mut psi = DMatrix::<C64>::zeros(cfg.n_antennas, cfg.n_rf);
    for (col, &idx) in order.iter().take(cfg.n_rf).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let peak = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let anchor = v
            .iter()
            .position(|x| x.abs() >= peak * (1.0 - 1e-9))
            .unwrap_or(0);
        let sign = v[anchor].signum();
        for i in 0..cfg.n_antennas {
            psi[(i, col)] = C64::new(sign * v[i], 0.0);
        }
    }
    let spectrum: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    Ok(SlepianBank {
        config: *cfg,
        psi,
        concentrations: spectrum[..cfg.n_rf].to_vec(),
        spectrum,
    })
}

/// Reduction matrix `U(φ̂) = D(φ̂)Ψ` for one coarse angle.
#[derive(Debug, Clone)]
pub struct ReductionBank {
    d_diag: DVector<C64>,
    psi: DMatrix<C64>,
    u: DMatrix<C64>,
    pointed_angle: f64,
    passband_half_width: f64,
}

impl ReductionBank {
    /// Tune the phase shifters of an existing Slepian bank to `pointed_angle`.
    pub fn new(bank: &SlepianBank, pointed_angle: f64) -> Result<Self> {
        let d_diag = phase_shift_network(bank.config.n_antennas, pointed_angle)?;
        let mut u = bank.psi.clone();
        for (i, mut row) in u.row_iter_mut().enumerate() {
            row *= d_diag[i];
        }
        Ok(Self {
            d_diag,
            psi: bank.psi.clone(),
            u,
            pointed_angle,
            passband_half_width: bank.config.passband_half_width(),
        })
    }

    pub fn d_diag(&self) -> &DVector<C64> {
        &self.d_diag
    }

    pub fn psi(&self) -> &DMatrix<C64> {
        &self.psi
    }

    pub fn u(&self) -> &DMatrix<C64> {
        &self.u
    }

    pub fn pointed_angle(&self) -> f64 {
        self.pointed_angle
    }

    /// `asin β` of the underlying Slepian bank.
    pub fn passband_half_width(&self) -> f64 {
        self.passband_half_width
    }

    pub fn n_antennas(&self) -> usize {
        self.u.nrows()
    }

    pub fn n_rf(&self) -> usize {
        self.u.ncols()
    }

    /// `Uᴴ v` for an antenna-domain vector.
    pub fn project(&self, v: &DVector<C64>) -> DVector<C64> {
        self.u.ad_mul(v)
    }

    /// Beamspace steering `Ψᴴ a(φ')` for a demodulated offset angle.
    pub fn beamspace_steering(&self, offset: f64) -> DVector<C64> {
        let a = response_from_sine(self.n_antennas(), offset.sin());
        self.psi.ad_mul(&a)
    }
}

pub fn reduction_matrix(cfg: &ArrayConfig, pointed_angle: f64) -> Result<ReductionBank> {
    ReductionBank::new(&slepian_bank(cfg)?, pointed_angle)
}
