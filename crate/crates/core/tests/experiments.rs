use beamrefine_core::array::{array_gain, slepian_bank};
use beamrefine_core::experiments::{
    run_sweep, run_trial, spearman, trial_rng, SweepSpec, TrialPoint, UserGeometry,
};
use beamrefine_core::metrics::{db_to_linear, spectral_efficiency};

fn small_spec() -> SweepSpec {
    SweepSpec {
        snr_bbf_db: vec![-15.0, -10.0],
        epsilons_deg: vec![0.5, 1.0, 1.5],
        n_trials: 40,
        seed: 21,
        ..SweepSpec::default()
    }
}

#[test]
fn unrefined_se_is_the_closed_form() {
    let spec = small_spec();
    let bank = slepian_bank(&spec.array).unwrap();
    for t in 0..5 {
        let point = TrialPoint {
            snr_bbf_db: -10.0,
            epsilon_deg: 1.5,
        };
        let out = run_trial(&spec, &bank, point, &mut trial_rng(spec.seed, 0, 0, t)).unwrap();
        assert_eq!(out.coarse_angle, out.true_angle - 1.5f64.to_radians());
        let g = array_gain(out.true_angle, out.coarse_angle, 64)
            .unwrap()
            .norm_sqr();
        assert_eq!(
            out.se_unrefined,
            spectral_efficiency(db_to_linear(-10.0) * g * spec.rx_gain_sq)
        );
    }
}

#[test]
fn perfect_coarse_beam_at_high_snr_keeps_full_gain() {
    let spec = SweepSpec {
        geometry: UserGeometry {
            aod_half_range: 0.0,
            ..UserGeometry::default()
        },
        ..small_spec()
    };
    let bank = slepian_bank(&spec.array).unwrap();
    let point = TrialPoint {
        snr_bbf_db: 60.0,
        epsilon_deg: 0.0,
    };
    let out = run_trial(&spec, &bank, point, &mut trial_rng(1, 0, 0, 0)).unwrap();
    let full = spectral_efficiency(db_to_linear(60.0) * 64.0 * spec.rx_gain_sq);
    assert!((out.se_unrefined - full).abs() <= 1e-12);
    assert!((out.se_refined - full).abs() <= 1e-6);
}

#[test]
fn failures_stay_rare_above_minus_fifteen_db() {
    let res = run_sweep(&small_spec()).unwrap();
    for p in &res.points {
        assert!(
            p.failures * 20 <= p.n_trials,
            "{} failures at {} dB",
            p.failures,
            p.snr_bbf_db
        );
    }
}

#[test]
fn near_noiseless_point_meets_the_noiseless_tolerances() {
    let spec = SweepSpec {
        snr_bbf_db: vec![60.0],
        epsilons_deg: vec![1.0],
        n_trials: 20,
        ..small_spec()
    };
    let p = run_sweep(&spec).unwrap().points[0];
    assert!(p.rmse_angle_deg <= 0.01);
    assert!(p.rmse_range_m <= 0.05);
    assert!(p.rmse_velocity_mps <= 0.5);
}

#[test]
fn single_trial_sweeps_are_reproducible() {
    let spec = SweepSpec {
        n_trials: 1,
        ..small_spec()
    };
    assert_eq!(run_sweep(&spec).unwrap(), run_sweep(&spec).unwrap());
    let other = SweepSpec {
        seed: 22,
        ..spec.clone()
    };
    assert_ne!(run_sweep(&spec).unwrap(), run_sweep(&other).unwrap());
}

#[test]
fn sweep_csv_layout() {
    let res = run_sweep(&SweepSpec {
        n_trials: 2,
        ..small_spec()
    })
    .unwrap();
    let mut se = Vec::new();
    res.write_se_csv(&mut se).unwrap();
    let se = String::from_utf8(se).unwrap();
    assert!(se.starts_with("snr_bbf_db,epsilon_deg,se_refined,se_unrefined\n"));
    assert_eq!(se.lines().count(), 7);
    let mut rmse = Vec::new();
    res.write_rmse_csv(&mut rmse).unwrap();
    let rmse = String::from_utf8(rmse).unwrap();
    assert!(rmse.starts_with(
        "snr_bbf_db,epsilon_deg,rmse_angle_deg,rmse_range_m,rmse_velocity_mps,failures\n"
    ));
    assert!(rmse.lines().skip(1).all(|l| l.split(',').count() == 6));
}

#[test]
fn spearman_basics() {
    let x = [1.0, 2.0, 3.0, 4.0, 5.0];
    assert!((spearman(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    assert!((spearman(&x, &[1.0, 4.0, 9.0, 16.0, 25.0]) - 1.0).abs() < 1e-12);
    assert!((spearman(&x, &[1.0, 1.0, 1.0, 2.0, 2.0]) - 0.866_025_403_784_438_6).abs() < 1e-12);
    assert!(spearman(&[1.0], &[2.0]).is_nan());
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(run_sweep(&SweepSpec {
        n_trials: 0,
        ..small_spec()
    })
    .is_err());
    assert!(run_sweep(&SweepSpec {
        snr_bbf_db: vec![],
        ..small_spec()
    })
    .is_err());
    let wide = SweepSpec {
        geometry: UserGeometry {
            aod_half_range: 89.5f64.to_radians(),
            ..UserGeometry::default()
        },
        ..small_spec()
    };
    assert!(run_sweep(&wide).is_err());
}
