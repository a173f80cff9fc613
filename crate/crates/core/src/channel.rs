//! Line-of-sight user channel and receiver noise.
//!
//! The radar sees the two-way delay `τ = 2d/c` and Doppler `ν = 2v/λ`; the
//! user link sees half of each. Coefficient magnitudes follow free-space
//! path loss (one way) and the radar equation (two way); phases are carried
//! by the [`UserState`].

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result, C64};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn wavelength(carrier_freq: f64) -> f64 {
    SPEED_OF_LIGHT / carrier_freq
}

/// Ground-truth state of one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserState {
    /// Angle of departure at the base station, radians.
    pub aod: f64,
    /// Angle of arrival at the user, radians.
    pub aoa: f64,
    /// Distance to the base station, meters.
    pub range: f64,
    /// Radial speed, m/s (positive = approaching raises the Doppler).
    pub speed: f64,
    /// Radar cross section, m².
    pub rcs: f64,
    /// Phase of the one-way coefficient `h`.
    pub tx_phase: f64,
    /// Phase of the two-way coefficient `h'`.
    pub bs_phase: f64,
}

impl UserState {
    /// A user with zero channel phases and broadside AoA.
    pub fn new(aod: f64, range: f64, speed: f64, rcs: f64) -> Result<Self> {
        let state = Self {
            aod,
            aoa: 0.0,
            range,
            speed,
            rcs,
            tx_phase: 0.0,
            bs_phase: 0.0,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn with_phases(mut self, tx_phase: f64, bs_phase: f64) -> Self {
        self.tx_phase = tx_phase;
        self.bs_phase = bs_phase;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.range > 0.0 && self.range.is_finite()) {
            return Err(Error::Domain(format!(
                "range {} m must be positive",
                self.range
            )));
        }
        if !(self.rcs > 0.0 && self.rcs.is_finite()) {
            return Err(Error::Domain(format!(
                "rcs {} m² must be positive",
                self.rcs
            )));
        }
        if !(self.aod.abs() <= PI / 2.0) {
            return Err(Error::Domain(format!(
                "aod {} rad outside [-π/2, π/2]",
                self.aod
            )));
        }
        if !self.speed.is_finite() {
            return Err(Error::Domain("speed must be finite".into()));
        }
        Ok(())
    }
}

/// Channel coefficients for one user at one carrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkCoefficients {
    /// One-way coefficient `h`, `|h|² = λ²/(4πd)²`.
    pub h_ue: C64,
    /// Two-way coefficient `h'`, `|h'|² = λ²σ/((4π)³d⁴)`.
    pub h_bs: C64,
    /// Two-way delay, seconds.
    pub delay: f64,
    /// Two-way Doppler, hertz.
    pub doppler: f64,
}

pub fn link_coefficients(state: &UserState, carrier_freq: f64) -> Result<LinkCoefficients> {
    if !(carrier_freq > 0.0) {
        return Err(Error::Domain(format!(
            "carrier frequency {carrier_freq} Hz must be positive"
        )));
    }
    state.validate()?;
    let lambda = wavelength(carrier_freq);
    let d = state.range;
    let ue_gain = lambda / (4.0 * PI * d);
    let bs_gain = (lambda * lambda * state.rcs / ((4.0 * PI).powi(3) * d.powi(4))).sqrt();
    Ok(LinkCoefficients {
        h_ue: C64::from_polar(ue_gain, state.tx_phase),
        h_bs: C64::from_polar(bs_gain, state.bs_phase),
        delay: 2.0 * d / SPEED_OF_LIGHT,
        doppler: 2.0 * state.speed / lambda,
    })
}

/// Circularly-symmetric complex Gaussian samples with per-sample variance
/// `variance`, laid out row-major over `shape`.
pub fn sample_noise<R: Rng + ?Sized>(
    rng: &mut R,
    shape: &[usize],
    variance: f64,
) -> Result<Vec<C64>> {
    if !(variance >= 0.0) {
        return Err(Error::Domain(format!(
            "noise variance {variance} must be non-negative"
        )));
    }
    let len: usize = shape.iter().product();
    if variance == 0.0 {
        return Ok(vec![C64::new(0.0, 0.0); len]);
    }
    let sigma = (variance / 2.0).sqrt();
    Ok((0..len)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(sigma * re, sigma * im)
        })
        .collect())
}
