"""Smoke test for the Python bindings.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml`,
then run `python python/smoke_test.py`.
"""

import math

import mimo_capacity as mc


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    golden = (math.sqrt(5.0) - 1.0) / 2.0
    iso = mc.ChannelStats.isotropic(4, 4, paths=1, sigma2=1.0)
    sol = mc.solve_canonical(iso)
    assert close(sol.delta[0], golden, 1e-8), sol
    assert close(sol.delta_tilde[0], golden, 1e-8), sol
    assert 0.0 < sol.lemma1_rho < 1.0
    assert close(mc.emi_approx(iso), 8 * math.log1p(golden) - 4 * golden**2, 1e-8)

    scalar = mc.ChannelStats.isotropic(1, 1)
    est = mc.emi_mc(scalar, trials=20_000, seed=1)
    assert abs(est.mean - 0.596347362323194) <= 4 * est.std_err, est

    wf = mc.waterfill([[1.0, 0.0], [0.0, 4.0]])
    assert close(wf.water_level, 1.625, 1e-12)
    assert all(close(p, q, 1e-12) for p, q in zip(wf.powers, [0.625, 1.375]))

    stats = mc.ChannelStats.reference(4, 4, mc.snr_to_sigma2(10.0))
    report = mc.optimize(stats)
    assert report.converged
    reference = mc.reference_maximizer(stats)
    assert close(report.emi_approx_value, reference.emi_approx_value, 1e-4)
    assert report.emi_approx_value >= mc.emi_approx(stats)
    q = report.q_star
    trace = sum(q.matrix()[i][i].real for i in range(4)) / 4
    assert close(trace, 1.0, 1e-12)
    dirs = [mc.Covariance.random(4, s) for s in range(20)]
    assert mc.max_directional_derivative(stats, q, dirs) <= 1e-6

    single = mc.ChannelStats.from_clusters([(4.04, 0.05, 1.71, 0.05, 1.0)], 4, 4, mc.snr_to_sigma2(25.0))
    try:
        mc.optimize(single)
    except mc.NonConvergenceError:
        pass
    else:
        raise AssertionError("expected the single-path 25 dB case to cycle")

    try:
        mc.Covariance([[2.0, 0.0], [0.0, 1.0]])
    except ValueError:
        pass
    else:
        raise AssertionError("trace constraint not enforced")

    print("smoke test passed:", report)


if __name__ == "__main__":
    main()
