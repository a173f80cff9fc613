//! Seeded Monte-Carlo sweeps over SNR and angle discretization error.
//!
//! Every trial owns an independent ChaCha8 stream: the generator is seeded
//! with the sweep seed and its 64-bit stream id is
//! `snr_index << 44 | epsilon_index << 24 | trial_index`. Trials can run in
//! any order or in parallel and the aggregate stays bit-identical.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::array::{array_gain, slepian_bank, ArrayConfig, ReductionBank, SlepianBank};
use crate::channel::UserState;
use crate::estimator::{estimate_state, EstimatorSettings, Refinement};
use crate::metrics::{db_to_linear, noise_variance_for_snr_bbf, spectral_efficiency};
use crate::ofdm::{generate_symbols, radar_snapshots_single, OfdmConfig};
use crate::{Error, Result};

const SNR_BITS: u32 = 20;
const EPSILON_BITS: u32 = 20;
const TRIAL_BITS: u32 = 24;

/// Kinematics shared by every simulated user; the AoD is drawn per trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserGeometry {
    pub range: f64,
    pub speed: f64,
    pub rcs: f64,
    /// AoD drawn uniformly in `[-aod_half_range, aod_half_range]`, radians.
    pub aod_half_range: f64,
}

impl Default for UserGeometry {
    fn default() -> Self {
        Self {
            range: 40.0,
            speed: 20.0,
            rcs: 100.0,
            aod_half_range: 30f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub snr_bbf_db: Vec<f64>,
    pub epsilons_deg: Vec<f64>,
    pub n_trials: usize,
    pub seed: u64,
    pub array: ArrayConfig,
    pub ofdm: OfdmConfig,
    pub geometry: UserGeometry,
    pub rx_gain_sq: f64,
    pub estimator: EstimatorSettings,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            snr_bbf_db: (0..9).map(|i| -40.0 + 5.0 * i as f64).collect(),
            epsilons_deg: vec![0.5, 1.0, 1.5],
            n_trials: 1000,
            seed: 1,
            array: ArrayConfig::table_one(),
            ofdm: OfdmConfig::table_one(),
            geometry: UserGeometry::default(),
            rx_gain_sq: 4.0,
            estimator: EstimatorSettings::default(),
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 || self.n_trials >= 1 << TRIAL_BITS {
            return Err(Error::Config(format!(
                "sweep.n_trials = {} must lie in [1, 2^{TRIAL_BITS})",
                self.n_trials
            )));
        }
        if self.snr_bbf_db.is_empty() || self.epsilons_deg.is_empty() {
            return Err(Error::Config("sweep grids must be nonempty".into()));
        }
        if self.snr_bbf_db.len() >= 1 << SNR_BITS || self.epsilons_deg.len() >= 1 << EPSILON_BITS {
            return Err(Error::Config("sweep grids are too large".into()));
        }
        if self.snr_bbf_db.iter().any(|s| s.is_nan()) {
            return Err(Error::Config("sweep.snr_bbf_db contains NaN".into()));
        }
        self.array.validate()?;
        self.ofdm.validate_with(self.array.n_rf)?;
        self.estimator.validate()?;
        if !(self.rx_gain_sq >= 0.0) {
            return Err(Error::Config("link.rx_gain_sq must be non-negative".into()));
        }
        let g = &self.geometry;
        UserState::new(0.0, g.range, g.speed, g.rcs).map_err(|e| Error::Config(e.to_string()))?;
        let max_eps = self
            .epsilons_deg
            .iter()
            .fold(0.0_f64, |m, e| m.max(e.abs()))
            .to_radians();
        if !(g.aod_half_range >= 0.0) || g.aod_half_range + max_eps > std::f64::consts::FRAC_PI_2 {
            return Err(Error::Config(
                "user AoD range plus the largest epsilon must stay within 90°".into(),
            ));
        }
        Ok(())
    }
}

/// One grid point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialPoint {
    pub snr_bbf_db: f64,
    pub epsilon_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub true_angle: f64,
    pub coarse_angle: f64,
    /// Refined angle; equals the coarse angle when the estimator failed.
    pub refined_angle: f64,
    pub range: f64,
    pub velocity: f64,
    /// With refinement. Falls back to the coarse beam on failure.
    pub se_refined: f64,
    pub se_unrefined: f64,
    pub failure: Option<String>,
}

/// Generator for trial `trial` at grid indices `(snr_index, epsilon_index)`.
pub fn trial_rng(seed: u64, snr_index: usize, epsilon_index: usize, trial: usize) -> ChaCha8Rng {
    let stream = ((snr_index as u64) << (EPSILON_BITS + TRIAL_BITS))
        | ((epsilon_index as u64) << TRIAL_BITS)
        | trial as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One end-to-end trial: draw a user, synthesize the radar echo at the
/// requested `SNR_BBF`, refine, and score.
///
/// Estimator errors are reported in [`TrialOutcome::failure`]; only invalid
/// configuration is returned as `Err`.
pub fn run_trial<R: Rng + ?Sized>(
    spec: &SweepSpec,
    bank: &SlepianBank,
    point: TrialPoint,
    rng: &mut R,
) -> Result<TrialOutcome> {
    let g = &spec.geometry;
    let aod = if g.aod_half_range > 0.0 {
        rng.random_range(-g.aod_half_range..=g.aod_half_range)
    } else {
        0.0
    };
    let tx_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let bs_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let state = UserState::new(aod, g.range, g.speed, g.rcs)?.with_phases(tx_phase, bs_phase);
    let coarse = aod - point.epsilon_deg.to_radians();

    let snr_bbf = db_to_linear(point.snr_bbf_db);
    let mut ofdm = spec.ofdm;
    ofdm.noise_variance = noise_variance_for_snr_bbf(&state, &ofdm, snr_bbf)?;
    let n_a = spec.array.n_antennas;
    let se_for = |angle: f64| -> Result<f64> {
        let g_t = array_gain(aod, angle, n_a)?;
        Ok(spectral_efficiency(
            snr_bbf * g_t.norm_sqr() * spec.rx_gain_sq,
        ))
    };
    let se_unrefined = se_for(coarse)?;

    let red = ReductionBank::new(bank, coarse)?;
    let symbols = generate_symbols(&ofdm, rng);
    let grid = radar_snapshots_single(&state, &red, &ofdm, &symbols, 0, rng)?;
    let x = symbols.user_matrix(0)?;

    match estimate_state(&grid, &red, &x, &ofdm, &spec.estimator) {
        Ok(Refinement { state: est, .. }) => Ok(TrialOutcome {
            true_angle: aod,
            coarse_angle: coarse,
            refined_angle: est.angle,
            range: est.range,
            velocity: est.velocity,
            se_refined: se_for(est.angle)?,
            se_unrefined,
            failure: None,
        }),
        Err(e) => Ok(TrialOutcome {
            true_angle: aod,
            coarse_angle: coarse,
            refined_angle: coarse,
            range: f64::NAN,
            velocity: f64::NAN,
            se_refined: se_unrefined,
            se_unrefined,
            failure: Some(e.to_string()),
        }),
    }
}

/// Aggregate over the trials of one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub snr_bbf_db: f64,
    pub epsilon_deg: f64,
    pub se_refined: f64,
    pub se_unrefined: f64,
    /// RMSE over successful trials; NaN when every trial failed.
    pub rmse_angle_deg: f64,
    pub rmse_range_m: f64,
    pub rmse_velocity_mps: f64,
    pub failures: usize,
    pub n_trials: usize,
}

impl SweepPoint {
    pub fn all_failed(&self) -> bool {
        self.failures == self.n_trials
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// SNR-major, then epsilon, matching the order of the spec's grids.
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn point(&self, snr_bbf_db: f64, epsilon_deg: f64) -> Option<&SweepPoint> {
        self.points
            .iter()
            .find(|p| p.snr_bbf_db == snr_bbf_db && p.epsilon_deg == epsilon_deg)
    }

    /// Header `snr_bbf_db,epsilon_deg,se_refined,se_unrefined`.
    pub fn write_se_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "snr_bbf_db,epsilon_deg,se_refined,se_unrefined")?;
        for p in &self.points {
            writeln!(
                out,
                "{},{},{},{}",
                p.snr_bbf_db, p.epsilon_deg, p.se_refined, p.se_unrefined
            )?;
        }
        Ok(())
    }

    /// Header
    /// `snr_bbf_db,epsilon_deg,rmse_angle_deg,rmse_range_m,rmse_velocity_mps,failures`.
    pub fn write_rmse_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "snr_bbf_db,epsilon_deg,rmse_angle_deg,rmse_range_m,rmse_velocity_mps,failures"
        )?;
        for p in &self.points {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                p.snr_bbf_db,
                p.epsilon_deg,
                p.rmse_angle_deg,
                p.rmse_range_m,
                p.rmse_velocity_mps,
                p.failures
            )?;
        }
        Ok(())
    }
}

fn aggregate(point: TrialPoint, geometry: &UserGeometry, outcomes: &[TrialOutcome]) -> SweepPoint {
    let n = outcomes.len();
    let ok: Vec<&TrialOutcome> = outcomes.iter().filter(|o| o.failure.is_none()).collect();
    let rmse = |f: &dyn Fn(&TrialOutcome) -> f64| -> f64 {
        if ok.is_empty() {
            return f64::NAN;
        }
        (ok.iter().map(|o| f(o).powi(2)).sum::<f64>() / ok.len() as f64).sqrt()
    };
    SweepPoint {
        snr_bbf_db: point.snr_bbf_db,
        epsilon_deg: point.epsilon_deg,
        se_refined: outcomes.iter().map(|o| o.se_refined).sum::<f64>() / n as f64,
        se_unrefined: outcomes.iter().map(|o| o.se_unrefined).sum::<f64>() / n as f64,
        rmse_angle_deg: rmse(&|o| (o.refined_angle - o.true_angle).to_degrees()),
        rmse_range_m: rmse(&|o| o.range - geometry.range),
        rmse_velocity_mps: rmse(&|o| o.velocity - geometry.speed),
        failures: n - ok.len(),
        n_trials: n,
    }
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let bank = slepian_bank(&spec.array)?;
    let n_eps = spec.epsilons_deg.len();
    let tasks: Vec<(usize, usize, usize)> = (0..spec.snr_bbf_db.len())
        .flat_map(|i| (0..n_eps).flat_map(move |j| (0..spec.n_trials).map(move |t| (i, j, t))))
        .collect();
    let outcomes = tasks
        .par_iter()
        .map(|&(i, j, t)| {
            let point = TrialPoint {
                snr_bbf_db: spec.snr_bbf_db[i],
                epsilon_deg: spec.epsilons_deg[j],
            };
            run_trial(spec, &bank, point, &mut trial_rng(spec.seed, i, j, t))
        })
        .collect::<Result<Vec<_>>>()?;

    let points = outcomes
        .chunks(spec.n_trials)
        .enumerate()
        .map(|(idx, chunk)| {
            let point = TrialPoint {
                snr_bbf_db: spec.snr_bbf_db[idx / n_eps],
                epsilon_deg: spec.epsilons_deg[idx % n_eps],
            };
            aggregate(point, &spec.geometry, chunk)
        })
        .collect();
    Ok(SweepResult { points })
}

/// Spearman rank correlation with average ranks for ties. NaN pairs are
/// dropped; fewer than two remaining pairs give NaN.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let pairs: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| !a.is_nan() && !b.is_nan())
        .map(|(a, b)| (*a, *b))
        .collect();
    if pairs.len() < 2 {
        return f64::NAN;
    }
    let rx = ranks(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let ry = ranks(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    pearson(&rx, &ry)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quick_spec() -> SweepSpec {
        SweepSpec {
            snr_bbf_db: vec![-10.0, 0.0],
            epsilons_deg: vec![1.0],
            n_trials: 2,
            ofdm: OfdmConfig {
                n_symbols: 8,
                n_subcarriers: 64,
                ..OfdmConfig::table_one()
            },
            ..SweepSpec::default()
        }
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let a: u64 = trial_rng(5, 0, 0, 0).random();
        let b: u64 = trial_rng(5, 0, 0, 1).random();
        let c: u64 = trial_rng(5, 1, 0, 0).random();
        let a2: u64 = trial_rng(5, 0, 0, 0).random();
        assert_eq!(a, a2);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn spearman_basics() {
        assert_abs_diff_eq!(
            spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]),
            -1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 4.0, 9.0, 16.0]),
            1.0,
            epsilon = 1e-12
        );
        assert_eq!(spearman(&[1.0, 2.0], &[5.0, 5.0]), 0.0);
        assert!(spearman(&[1.0], &[2.0]).is_nan());
        assert_eq!(ranks(&[3.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn spec_validation() {
        assert!(quick_spec().validate().is_ok());
        assert!(SweepSpec {
            n_trials: 0,
            ..quick_spec()
        }
        .validate()
        .is_err());
        assert!(SweepSpec {
            snr_bbf_db: vec![],
            ..quick_spec()
        }
        .validate()
        .is_err());
        let mut wide = quick_spec();
        wide.geometry.aod_half_range = 89f64.to_radians();
        wide.epsilons_deg = vec![2.0];
        assert!(wide.validate().is_err());
    }

    #[test]
    fn unrefined_se_matches_formula() {
        let spec = quick_spec();
        let bank = slepian_bank(&spec.array).unwrap();
        let point = TrialPoint {
            snr_bbf_db: -10.0,
            epsilon_deg: 1.5,
        };
        let out = run_trial(&spec, &bank, point, &mut trial_rng(3, 0, 0, 0)).unwrap();
        let g = array_gain(out.true_angle, out.coarse_angle, 64)
            .unwrap()
            .norm_sqr();
        assert_eq!(out.se_unrefined, (1.0 + 0.1 * g * 4.0).log2());
        assert_abs_diff_eq!(
            out.true_angle - out.coarse_angle,
            1.5f64.to_radians(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn sweep_is_deterministic_and_ordered() {
        let spec = quick_spec();
        let a = run_sweep(&spec).unwrap();
        let b = run_sweep(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.points.len(), 2);
        assert_eq!(a.points[0].snr_bbf_db, -10.0);
        assert_eq!(a.points[1].snr_bbf_db, 0.0);
        let mut csv = Vec::new();
        a.write_rmse_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(!text.contains('\r'));
    }
}
