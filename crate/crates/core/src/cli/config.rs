//! Flat `section.key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Reals accept a
//! `a/b` fraction form (`array.beta = 4/64`); lists are comma separated.
//! Every key has a default, unknown keys are errors, and the assembled
//! configuration is validated as a whole after all sources are applied.
//!
//! The per-antenna noise variance is not a key: each run derives it from
//! the requested `SNR_BBF`.

use std::fmt;
use std::path::Path;

use crate::array::ArrayConfig;
use crate::estimator::EstimatorSettings;
use crate::experiments::{SweepSpec, UserGeometry};
use crate::ofdm::OfdmConfig;
use crate::Error;

/// A configuration error with its source location.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub origin: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.origin, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Settings of the single-trial `refine` command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineSettings {
    pub epsilon_deg: f64,
    pub snr_bbf_db: f64,
    pub noiseless: bool,
}

/// The user simulated by `refine`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserDefaults {
    pub aod_deg: f64,
    pub aoa_deg: f64,
    pub range_m: f64,
    pub speed_mps: f64,
    pub rcs_dbsm: f64,
    pub aod_half_range_deg: f64,
}

impl UserDefaults {
    pub fn rcs_m2(&self) -> f64 {
        10f64.powf(self.rcs_dbsm / 10.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub array: ArrayConfig,
    pub ofdm: OfdmConfig,
    pub user: UserDefaults,
    pub rx_gain_sq: f64,
    pub refine: RefineSettings,
    pub sweep_snr_bbf_db: Vec<f64>,
    pub sweep_epsilons_deg: Vec<f64>,
    pub sweep_n_trials: usize,
    pub estimator: EstimatorSettings,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sweep = SweepSpec::default();
        Self {
            array: ArrayConfig::table_one(),
            ofdm: OfdmConfig::table_one(),
            user: UserDefaults {
                aod_deg: 20.0,
                aoa_deg: 0.0,
                range_m: 40.0,
                speed_mps: 20.0,
                rcs_dbsm: 20.0,
                aod_half_range_deg: 30.0,
            },
            rx_gain_sq: 4.0,
            refine: RefineSettings {
                epsilon_deg: 1.0,
                snr_bbf_db: -10.0,
                noiseless: false,
            },
            sweep_snr_bbf_db: sweep.snr_bbf_db,
            sweep_epsilons_deg: sweep.epsilons_deg,
            sweep_n_trials: sweep.n_trials,
            estimator: EstimatorSettings::default(),
            seed: 1,
        }
    }
}

/// Every accepted key, in documentation order.
pub const KEYS: &[&str] = &[
    "array.n_antennas",
    "array.n_rf",
    "array.beta",
    "ofdm.n_symbols",
    "ofdm.n_subcarriers",
    "ofdm.subcarrier_spacing_hz",
    "ofdm.cp_fraction",
    "ofdm.carrier_freq_hz",
    "ofdm.tx_power_w",
    "ofdm.n_users",
    "user.aod_deg",
    "user.aoa_deg",
    "user.range_m",
    "user.speed_mps",
    "user.rcs_dbsm",
    "user.aod_half_range_deg",
    "link.rx_gain_sq",
    "refine.epsilon_deg",
    "refine.snr_bbf_db",
    "refine.noiseless",
    "sweep.snr_bbf_db",
    "sweep.epsilons_deg",
    "sweep.n_trials",
    "estimator.music_points",
    "estimator.music_half_width_deg",
    "estimator.fft_oversampling",
    "run.seed",
];

fn parse_real(v: &str) -> Result<f64, String> {
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| format!("'{v}' is not a number"))
    };
    match v.split_once('/') {
        Some((num, den)) => Ok(parse(num)? / parse(den)?),
        None => parse(v),
    }
}

fn parse_usize(v: &str) -> Result<usize, String> {
    v.trim()
        .parse()
        .map_err(|_| format!("'{v}' is not a non-negative integer"))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("'{v}' is not a boolean")),
    }
}

fn parse_list(v: &str) -> Result<Vec<f64>, String> {
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(parse_real)
        .collect()
}

impl RunConfig {
    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key {
            "array.n_antennas" => self.array.n_antennas = parse_usize(v)?,
            "array.n_rf" => self.array.n_rf = parse_usize(v)?,
            "array.beta" => self.array.beta = parse_real(v)?,
            "ofdm.n_symbols" => self.ofdm.n_symbols = parse_usize(v)?,
            "ofdm.n_subcarriers" => self.ofdm.n_subcarriers = parse_usize(v)?,
            "ofdm.subcarrier_spacing_hz" => self.ofdm.subcarrier_spacing = parse_real(v)?,
            "ofdm.cp_fraction" => self.ofdm.cp_fraction = parse_real(v)?,
            "ofdm.carrier_freq_hz" => self.ofdm.carrier_freq = parse_real(v)?,
            "ofdm.tx_power_w" => self.ofdm.tx_power = parse_real(v)?,
            "ofdm.n_users" => self.ofdm.n_users = parse_usize(v)?,
            "user.aod_deg" => self.user.aod_deg = parse_real(v)?,
            "user.aoa_deg" => self.user.aoa_deg = parse_real(v)?,
            "user.range_m" => self.user.range_m = parse_real(v)?,
            "user.speed_mps" => self.user.speed_mps = parse_real(v)?,
            "user.rcs_dbsm" => self.user.rcs_dbsm = parse_real(v)?,
            "user.aod_half_range_deg" => self.user.aod_half_range_deg = parse_real(v)?,
            "link.rx_gain_sq" => self.rx_gain_sq = parse_real(v)?,
            "refine.epsilon_deg" => self.refine.epsilon_deg = parse_real(v)?,
            "refine.snr_bbf_db" => self.refine.snr_bbf_db = parse_real(v)?,
            "refine.noiseless" => self.refine.noiseless = parse_bool(v)?,
            "sweep.snr_bbf_db" => self.sweep_snr_bbf_db = parse_list(v)?,
            "sweep.epsilons_deg" => self.sweep_epsilons_deg = parse_list(v)?,
            "sweep.n_trials" => self.sweep_n_trials = parse_usize(v)?,
            "estimator.music_points" => self.estimator.music_points = parse_usize(v)?,
            "estimator.music_half_width_deg" => {
                self.estimator.music_half_width = match v {
                    "auto" => None,
                    _ => Some(parse_real(v)?.to_radians()),
                }
            }
            "estimator.fft_oversampling" => self.estimator.fft_oversampling = parse_usize(v)?,
            "run.seed" => {
                self.seed = v
                    .parse()
                    .map_err(|_| format!("'{v}' is not a 64-bit seed"))?
            }
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Apply one `key=value` assignment.
    pub fn apply_assignment(&mut self, assignment: &str) -> Result<(), String> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| "expected key=value".to_string())?;
        self.set(key.trim(), value)
    }

    /// Apply the lines of a config file on top of `self`. `origin` names the
    /// source in error messages.
    pub fn apply_text(&mut self, origin: &str, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.apply_assignment(line).map_err(|message| ConfigError {
                origin: format!("{origin}:{}", i + 1),
                message,
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            origin: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut cfg = Self::default();
        cfg.apply_text(&path.display().to_string(), &text)?;
        Ok(cfg)
    }

    /// Re-check every module invariant.
    pub fn validate(&self) -> Result<(), Error> {
        self.array.validate()?;
        self.ofdm.validate_with(self.array.n_rf)?;
        self.estimator.validate()?;
        if !(self.user.aod_deg.abs() <= 90.0) {
            return Err(Error::Config("user.aod_deg must lie in [-90, 90]".into()));
        }
        if !((self.user.aod_deg - self.refine.epsilon_deg).abs() <= 90.0) {
            return Err(Error::Config(
                "user.aod_deg - refine.epsilon_deg must lie in [-90, 90]".into(),
            ));
        }
        if self.refine.snr_bbf_db.is_nan() {
            return Err(Error::Config("refine.snr_bbf_db must be a number".into()));
        }
        self.sweep_spec().validate()
    }

    pub fn geometry(&self) -> UserGeometry {
        UserGeometry {
            range: self.user.range_m,
            speed: self.user.speed_mps,
            rcs: self.user.rcs_m2(),
            aod_half_range: self.user.aod_half_range_deg.to_radians(),
        }
    }

    pub fn sweep_spec(&self) -> SweepSpec {
        SweepSpec {
            snr_bbf_db: self.sweep_snr_bbf_db.clone(),
            epsilons_deg: self.sweep_epsilons_deg.clone(),
            n_trials: self.sweep_n_trials,
            seed: self.seed,
            array: self.array,
            ofdm: self.ofdm,
            geometry: self.geometry(),
            rx_gain_sq: self.rx_gain_sq,
            estimator: self.estimator,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_table_one_and_valid() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.array.n_antennas, 64);
        assert_eq!(cfg.ofdm.n_subcarriers, 512);
        assert_eq!(cfg.user.rcs_m2(), 100.0);
        assert_eq!(cfg.rx_gain_sq, 4.0);
    }

    #[test]
    fn parses_file_text() {
        let mut cfg = RunConfig::default();
        cfg.apply_text(
            "t.cfg",
            "# comment\n\narray.beta = 4/64\nsweep.snr_bbf_db = -10, 0,10\nrefine.noiseless=true\nestimator.music_half_width_deg=auto\n",
        )
        .unwrap();
        assert_eq!(cfg.array.beta, 0.0625);
        assert_eq!(cfg.sweep_snr_bbf_db, vec![-10.0, 0.0, 10.0]);
        assert!(cfg.refine.noiseless);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let mut cfg = RunConfig::default();
        let err = cfg
            .apply_text("t.cfg", "array.n_rf = 4\n\nbogus.key = 1\n")
            .unwrap_err();
        assert_eq!(err.origin, "t.cfg:3");
        assert!(err.message.contains("unknown key"));

        let err = cfg.apply_text("t.cfg", "array.n_rf = four\n").unwrap_err();
        assert_eq!(err.origin, "t.cfg:1");
        let err = cfg.apply_text("t.cfg", "just words\n").unwrap_err();
        assert!(err.message.contains("key=value"));
    }

    #[test]
    fn every_documented_key_is_accepted() {
        let mut cfg = RunConfig::default();
        for key in KEYS {
            let value = match *key {
                "refine.noiseless" => "false",
                "estimator.music_half_width_deg" => "auto",
                "sweep.snr_bbf_db" | "sweep.epsilons_deg" => "1,2",
                _ => "4",
            };
            cfg.set(key, value).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }

    #[test]
    fn invalid_combinations_fail_validation() {
        let mut cfg = RunConfig::default();
        cfg.set("array.n_rf", "8").unwrap();
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.set("ofdm.n_users", "5").unwrap();
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.set("sweep.n_trials", "0").unwrap();
        assert!(cfg.validate().is_err());
    }
}
