//! Beam refinement and user state acquisition for a hybrid digital/analog
//! mmWave base station with a co-located OFDM radar receiver.
//!
//! The crate covers the whole sampled-domain chain:
//!
//! - [`array`]: ULA steering vectors, transmit beams, the phase-shifter
//!   network and the Slepian filter bank forming `U = D(φ̂)Ψ`.
//! - [`channel`]: line-of-sight one-way and two-way coefficients, noise.
//! - [`ofdm`]: symbol generation and radar/UE snapshot synthesis.
//! - [`estimator`]: sample covariance, beamspace MUSIC, and the FFT
//!   matched filter for delay and Doppler.
//! - [`metrics`]: link-budget SNRs and spectral efficiency.
//! - [`experiments`]: seeded Monte-Carlo sweeps.
//! - [`cli`]: configuration files and the `beamrefine` command line.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array;
pub mod channel;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod metrics;
pub mod ofdm;

pub use error::{Error, Result};

/// Complex sample type used throughout.
pub type C64 = num_complex::Complex64;
