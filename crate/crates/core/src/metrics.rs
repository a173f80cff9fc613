//! Link-budget SNRs and spectral efficiency.
//!
//! All ratios are linear; use [`db_to_linear`] and [`linear_to_db`] at I/O
//! boundaries.

use crate::array::ArrayConfig;
use crate::channel::{link_coefficients, UserState};
use crate::ofdm::OfdmConfig;
use crate::{Error, Result, C64};

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// `log₂(1 + snr)` in bits/s/Hz.
pub fn spectral_efficiency(snr: f64) -> f64 {
    (1.0 + snr).log2()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    /// SNR at the user after both beamforming gains.
    pub snr_ue: f64,
    /// SNR at each base-station antenna, before the reduction matrix.
    pub snr_bs: f64,
    /// SNR at the user before any beamforming gain.
    pub snr_bbf: f64,
    pub spectral_efficiency: f64,
    /// `|g_r|²`.
    pub rx_gain_sq: f64,
}

/// SNR chain for one user served with transmit gain `g_t`.
///
/// `snr_bs` uses `N_rf` in the denominator; it equals
/// `snr_ue · σ_rcs / (4πd²|g_r|²)` only when `K = N_rf`.
pub fn link_budget(
    state: &UserState,
    ofdm: &OfdmConfig,
    array: &ArrayConfig,
    g_t: C64,
    rx_gain_sq: f64,
) -> Result<LinkBudget> {
    if !(ofdm.noise_variance > 0.0) {
        return Err(Error::Domain(
            "link budget needs a positive noise variance".into(),
        ));
    }
    if !(rx_gain_sq >= 0.0) {
        return Err(Error::Domain(format!(
            "|g_r|² = {rx_gain_sq} must be non-negative"
        )));
    }
    let lc = link_coefficients(state, ofdm.carrier_freq)?;
    let noise = ofdm.noise_variance;
    let snr_bbf = lc.h_ue.norm_sqr() * ofdm.stream_power() / noise;
    let snr_ue = snr_bbf * g_t.norm_sqr() * rx_gain_sq;
    let snr_bs = lc.h_bs.norm_sqr() * g_t.norm_sqr() * ofdm.tx_power / (array.n_rf as f64 * noise);
    Ok(LinkBudget {
        snr_ue,
        snr_bs,
        snr_bbf,
        spectral_efficiency: spectral_efficiency(snr_ue),
        rx_gain_sq,
    })
}

/// Noise variance giving the requested `SNR_BBF = |h|² P_t / (K σ_n²)`.
pub fn noise_variance_for_snr_bbf(
    state: &UserState,
    ofdm: &OfdmConfig,
    snr_bbf: f64,
) -> Result<f64> {
    if !(snr_bbf > 0.0) {
        return Err(Error::Domain(format!("SNR_BBF {snr_bbf} must be positive")));
    }
    let lc = link_coefficients(state, ofdm.carrier_freq)?;
    Ok(lc.h_ue.norm_sqr() * ofdm.stream_power() / snr_bbf)
}
