"""Smoke test for the beamrefine Python module.

Build and install first:

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/beamrefine-*.whl

then run ``python python/smoke_test.py``.
"""

import cmath
import math

import beamrefine as br


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    arr = br.ArrayConfig()
    assert (arr.n_antennas, arr.n_rf) == (64, 4)
    assert close(arr.beta, 4 / 64, 1e-15)

    a = br.steering_vector(4, math.pi / 6)
    assert close(a[1], 1j, 1e-12) and close(a[2], -1, 1e-12)

    g = br.array_gain(math.radians(0.5), 0.0, 64)
    assert close(abs(g) ** 2, 49.179586939, 1e-6)

    gamma = br.concentration_matrix(64, 4 / 64)
    assert close(sum(gamma[i][i] for i in range(64)), 4.0, 1e-12)

    bank = br.slepian_bank(arr)
    psi = bank.psi()
    assert len(psi) == 64 and len(psi[0]) == 4
    gram = sum(abs(row[0]) ** 2 for row in psi)
    assert close(gram, 1.0, 1e-10)
    assert bank.concentrations()[0] > 0.99

    user = br.UserState(math.radians(20), 40.0, 20.0, 100.0)
    lc = br.link_coefficients(user, 60e9)
    assert close(lc.delay, 266.8512761585216e-9, 1e-18)
    assert close(lc.doppler, 8005.538284755649, 1e-6)

    ofdm = br.OfdmConfig(noise_variance=1e-12)
    budget = br.link_budget(user, ofdm, arr, complex(8, 0), 4.0)
    assert close(budget.snr_ue, budget.snr_bbf * 256, 1e-9 * budget.snr_ue)

    coarse = math.radians(19)
    est = br.refine(user, coarse)
    assert abs(math.degrees(est.angle) - 20) <= 0.01, est.angle
    assert abs(est.range - 40) <= 0.05, est.range
    assert abs(est.velocity - 20) <= 0.5, est.velocity

    noisy = br.refine(user, coarse, snr_bbf_db=-10.0, seed=3)
    assert abs(math.degrees(noisy.angle) - 20) <= 0.2

    points = br.run_sweep([-10.0, 0.0], [1.5], n_trials=8, seed=2)
    assert len(points) == 2
    for p in points:
        assert p.failures == 0
        assert p.se_refined > p.se_unrefined
    again = br.run_sweep([-10.0, 0.0], [1.5], n_trials=8, seed=2)
    assert [p.se_refined for p in points] == [p.se_refined for p in again]

    try:
        br.steering_vector(8, 2.0)
    except ValueError:
        pass
    else:
        raise AssertionError("out-of-range angle accepted")

    print("beamrefine smoke test passed")
    print(f"  refined angle {math.degrees(est.angle):.6f} deg, range {est.range:.4f} m, "
          f"velocity {est.velocity:.4f} m/s")
    print(f"  SE gap at 0 dB, eps=1.5 deg: {points[1].se_refined - points[1].se_unrefined:.3f} bits/s/Hz")
    assert cmath.isfinite(g)


if __name__ == "__main__":
    main()
