use std::f64::consts::PI;

use approx::assert_relative_eq;
use beamrefine_core::array::{array_gain, slepian_bank, ArrayConfig, ReductionBank};
use beamrefine_core::channel::{link_coefficients, UserState};
use beamrefine_core::estimator::sample_covariance;
use beamrefine_core::ofdm::{
    generate_symbols, radar_snapshots_exact, radar_snapshots_single, ue_received, validate_timing,
    OfdmConfig, SnapshotGrid, TimingViolation,
};
use beamrefine_core::C64;
use nalgebra::SymmetricEigen;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn deg(x: f64) -> f64 {
    x.to_radians()
}

fn noiseless() -> OfdmConfig {
    OfdmConfig {
        noise_variance: 0.0,
        ..OfdmConfig::table_one()
    }
}

fn bank_at(angle: f64) -> ReductionBank {
    ReductionBank::new(&slepian_bank(&ArrayConfig::table_one()).unwrap(), angle).unwrap()
}

#[test]
fn noiseless_snapshots_are_rank_one() {
    let cfg = noiseless();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let state = UserState::new(deg(12.0), 40.0, 20.0, 100.0)
        .unwrap()
        .with_phases(0.3, 1.9);
    let bank = bank_at(deg(11.0));
    let symbols = generate_symbols(&cfg, &mut rng);
    let grid = radar_snapshots_single(&state, &bank, &cfg, &symbols, 0, &mut rng).unwrap();
    let eig = SymmetricEigen::new(sample_covariance(&grid).unwrap());
    let mut ev: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    assert!(ev[1] / ev[0] <= 1e-8);
}

#[test]
fn grid_phase_structure_is_separable() {
    let cfg = noiseless();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let state = UserState::new(deg(-8.0), 40.0, 20.0, 100.0).unwrap();
    let bank = bank_at(deg(-7.0));
    let symbols = generate_symbols(&cfg, &mut rng);
    let grid = radar_snapshots_single(&state, &bank, &cfg, &symbols, 0, &mut rng).unwrap();
    let lc = link_coefficients(&state, cfg.carrier_freq).unwrap();
    let t0 = cfg.block_duration();
    let df = cfg.subcarrier_spacing;

    // Remove the symbols and the delay-Doppler phasor: every snapshot must
    // collapse onto the (0, 0) spatial signature.
    let x = |n, m| symbols.get(0, n, m);
    let reference: Vec<C64> = grid.snapshot(0, 0).iter().map(|v| v / x(0, 0)).collect();
    for n in [0, 5, 15] {
        for m in [0, 1, 200, 511] {
            let phasor = C64::from_polar(
                1.0,
                2.0 * PI * (n as f64 * t0 * lc.doppler - m as f64 * df * lc.delay),
            );
            for (v, r) in grid.snapshot(n, m).iter().zip(&reference) {
                let got = v / x(n, m) / phasor;
                assert!((got - r).norm() <= 1e-9 * r.norm().max(1e-30));
            }
        }
    }
}

#[test]
fn zero_power_leaves_filtered_noise() {
    let cfg = OfdmConfig {
        tx_power: 0.0,
        noise_variance: 1.0,
        ..OfdmConfig::table_one()
    };
    let state = UserState::new(deg(5.0), 40.0, 20.0, 100.0).unwrap();
    let bank = bank_at(deg(4.0));
    let symbols = generate_symbols(&cfg, &mut ChaCha8Rng::seed_from_u64(3));
    let single = radar_snapshots_single(
        &state,
        &bank,
        &cfg,
        &symbols,
        0,
        &mut ChaCha8Rng::seed_from_u64(4),
    )
    .unwrap();
    let exact = radar_snapshots_exact(
        &[state],
        &[deg(4.0)],
        &bank,
        &cfg,
        &symbols,
        &mut ChaCha8Rng::seed_from_u64(4),
    )
    .unwrap();
    assert_eq!(single.values(), exact.values());
    let expected = (cfg.n_symbols * cfg.n_subcarriers * 4) as f64;
    assert_relative_eq!(single.energy(), expected, max_relative = 0.03);
}

#[test]
fn exact_synthesis_rejects_mismatched_users() {
    let cfg = noiseless();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let symbols = generate_symbols(&cfg, &mut rng);
    let state = UserState::new(0.0, 40.0, 20.0, 100.0).unwrap();
    let err = radar_snapshots_exact(
        &[state, state],
        &[0.0, 0.0],
        &bank_at(0.0),
        &cfg,
        &symbols,
        &mut rng,
    );
    assert!(err.is_err());
}

#[test]
fn user_side_signal_has_constant_power_and_half_delay_slope() {
    let cfg = noiseless();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let state = UserState::new(deg(20.0), 40.0, 20.0, 100.0).unwrap();
    let symbols = generate_symbols(&cfg, &mut rng);
    let g_r = C64::new(2.0, 0.0);
    let y = ue_received(&state, deg(19.0), 64, g_r, &cfg, &symbols, 0, &mut rng).unwrap();
    let lc = link_coefficients(&state, cfg.carrier_freq).unwrap();
    let g_t = array_gain(deg(20.0), deg(19.0), 64).unwrap();
    let power = (lc.h_ue * g_t * g_r).norm_sqr() * cfg.stream_power();
    for v in y.iter() {
        assert_relative_eq!(v.norm_sqr(), power, max_relative = 1e-9);
    }
    let z0 = y[(0, 0)] / symbols.get(0, 0, 0);
    let z1 = y[(0, 1)] / symbols.get(0, 0, 1);
    let slope = (z1 / z0).arg();
    let expected = -2.0 * PI * cfg.subcarrier_spacing * lc.delay / 2.0;
    assert!((slope - expected).abs() < 1e-9);
}

#[test]
fn user_side_without_rx_gain_is_pure_noise() {
    let cfg = OfdmConfig::table_one();
    let state = UserState::new(0.0, 40.0, 20.0, 100.0).unwrap();
    let symbols = generate_symbols(&cfg, &mut ChaCha8Rng::seed_from_u64(7));
    let y = ue_received(
        &state,
        0.0,
        64,
        C64::new(0.0, 0.0),
        &cfg,
        &symbols,
        0,
        &mut ChaCha8Rng::seed_from_u64(8),
    )
    .unwrap();
    let mean_power = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / y.len() as f64;
    assert_relative_eq!(mean_power, 1.0, max_relative = 0.05);
}

#[test]
fn table_one_geometry_reports_cp_violation() {
    let state = UserState::new(0.0, 40.0, 20.0, 100.0).unwrap();
    let report = validate_timing(&OfdmConfig::table_one(), &[state]).unwrap();
    assert!(!report.passes());
    assert!(matches!(
        report.violations[0],
        TimingViolation::DelayExceedsCp { .. }
    ));
    let near = UserState::new(0.0, 30.0, 20.0, 100.0).unwrap();
    assert!(validate_timing(&OfdmConfig::table_one(), &[near])
        .unwrap()
        .passes());
}

#[test]
fn snapshot_grid_serializes() {
    let values: Vec<C64> = (0..2 * 3 * 2)
        .map(|i| C64::new(i as f64, -0.5 * i as f64))
        .collect();
    let grid = SnapshotGrid::from_values(2, 3, 2, values).unwrap();
    let mut csv = Vec::new();
    grid.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,m,rf,re,im"));
    assert_eq!(lines.count(), 12);
    assert!(!text.contains('\r'));

    let mut bin = Vec::new();
    grid.write_binary(&mut bin).unwrap();
    assert_eq!(bin.len(), 12 * 16);
    assert_eq!(f64::from_le_bytes(bin[16..24].try_into().unwrap()), 1.0);
    assert_eq!(f64::from_le_bytes(bin[24..32].try_into().unwrap()), -0.5);
    assert!(SnapshotGrid::from_values(2, 3, 2, vec![C64::new(0.0, 0.0); 5]).is_err());
}
