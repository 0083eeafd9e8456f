import math

import numpy as np
import pytest

from radialsle.loewner import (LoewnerEnsemble, LoewnerTracker, PairedEnsemble,
                               brownian_driver, constant_driver, driver_from_csv,
                               driver_to_csv, step_rk4_reference, trace, trace_batch)


def test_brownian_driver_determinism():
    d1 = brownian_driver(4.0, 1e-3, 100, master_seed=7, path_index=3)
    d2 = brownian_driver(4.0, 1e-3, 100, master_seed=7, path_index=3)
    assert np.array_equal(d1.theta, d2.theta)
    d3 = brownian_driver(4.0, 1e-3, 100, master_seed=7, path_index=4)
    assert not np.array_equal(d1.theta, d3.theta)
    assert d1.theta[0] == 0.0


def test_driver_csv_roundtrip():
    d = brownian_driver(2.0, 1e-3, 50, master_seed=1)
    d2 = driver_from_csv(driver_to_csv(d), kind="brownian", kappa=2.0)
    assert np.array_equal(d.theta, d2.theta)
    assert d2.dt == pytest.approx(d.dt)


def test_capacity_normalization():
    d = brownian_driver(4.0, 1e-4, 2000, master_seed=5)
    tr = LoewnerTracker(d)
    tr.run()
    assert tr.capacity_error < 1e-6


def test_identity_chart_at_t0():
    d = brownian_driver(2.0, 1e-3, 10, master_seed=0)
    tr = LoewnerTracker(d, interior=[0.3 + 0.4j])
    w, wp, aw, a1w, awow = tr.w_of(0)
    assert w == pytest.approx(0.3 + 0.4j)
    assert wp == pytest.approx(1.0)
    assert aw == pytest.approx(math.atan2(0.4, 0.3))
    assert a1w == pytest.approx(math.atan2(-0.4, 0.7))
    assert awow == pytest.approx(-aw)   # arg(w'/w) = -arg z at t=0


def test_wq_prime_formula():
    # log w_t'(0) = t - i theta_t, exactly
    d = brownian_driver(6.0, 1e-3, 200, master_seed=9)
    tr = LoewnerTracker(d)
    tr.run()
    lq = tr.ens.wq_log[0]
    assert lq.real == pytest.approx(0.2, abs=1e-12)
    assert lq.imag == pytest.approx(-d.theta[-1], abs=1e-12)


def test_kappa0_symmetric_boundary_point_is_fixed():
    d = constant_driver(0.0, 1e-3, 500)
    tr = LoewnerTracker(d, boundary=[math.pi])
    tr.run()
    assert tr.boundary_angle(0) == pytest.approx(math.pi, abs=1e-12)
    # log|g'| decreases at rate -1/2 at the antipode
    assert tr.boundary_log_abs_g_prime(0) == pytest.approx(-0.25, abs=1e-6)


def test_kappa0_offaxis_boundary_point_moves_away():
    d = constant_driver(0.0, 1e-3, 500)
    tr = LoewnerTracker(d, boundary=[1.0])
    xs = []
    while tr.has_steps():
        tr.step()
        xs.append(tr.boundary_angle(0))
    xs = np.array(xs)
    assert np.all(np.diff(xs) > 0)   # monotone flow away from the driving point
    assert xs[-1] < math.pi


def test_boundary_cross_check_vs_complex_rk4():
    # smooth driver: theta(t) = 0.4 sin(2t); both schemes converge to the
    # same flow; demand 1e-8 agreement at dt = 1e-5 over t <= 0.5
    dt, n = 1e-5, 50000
    ts = dt * np.arange(n + 1)
    theta = 0.4 * np.sin(2 * ts)
    from radialsle.loewner import Driver
    d = Driver(dt=dt, theta=theta, kind="constant", kappa=0.0)
    tr = LoewnerTracker(d, boundary=[2.0])
    tr.run()
    alpha_split = tr.boundary_angle(0) + tr.theta
    lg_split = tr.boundary_log_abs_g_prime(0)
    g = np.exp(2.0j)
    lgp = 0.0 + 0.0j
    for k in range(n):
        g, lgp = step_rk4_reference(g, lgp, theta[k], theta[k + 1], dt)
    assert abs(g - np.exp(1j * alpha_split)) < 1e-8
    assert abs(lgp.real - lg_split) < 1e-8


def test_interior_cross_check_vs_complex_rk4():
    dt, n = 1e-5, 50000
    ts = dt * np.arange(n + 1)
    theta = 0.4 * np.sin(2 * ts)
    from radialsle.loewner import Driver
    d = Driver(dt=dt, theta=theta, kind="constant", kappa=0.0)
    z = 0.3 + 0.4j
    tr = LoewnerTracker(d, interior=[z])
    tr.run()
    g_split = tr.w(0) * np.exp(1j * tr.theta)
    lg_split = tr.log_g_prime(0)
    g = complex(z)
    lgp = 0.0 + 0.0j
    for k in range(n):
        g, lgp = step_rk4_reference(g, lgp, theta[k], theta[k + 1], dt)
    assert abs(g - g_split) < 1e-8
    assert abs(lgp - lg_split) < 1e-8


def test_markov_concatenation():
    d = brownian_driver(3.0, 1e-3, 400, master_seed=21)
    tr_full = LoewnerTracker(d, interior=[0.2 - 0.5j], boundary=[2.5])
    tr_full.run()
    tr_split = LoewnerTracker(d, interior=[0.2 - 0.5j], boundary=[2.5])
    tr_split.step(150)
    tr_split.step(250)
    assert abs(tr_full.w(0) - tr_split.w(0)) < 1e-9
    assert abs(tr_full.log_g_prime(0) - tr_split.log_g_prime(0)) < 1e-9
    assert abs(tr_full.boundary_angle(0) - tr_split.boundary_angle(0)) < 1e-9


def test_ensemble_determinism_across_blocking():
    # identical per-path streams regardless of how lanes are grouped
    kappa, dt, n = 4.0, 1e-3, 100
    from radialsle.loewner import path_rng
    incs = np.vstack([math.sqrt(kappa * dt) * path_rng(11, i, 0).standard_normal(n)
                      for i in range(4)])
    ens_all = LoewnerEnsemble(4, dt, kappa, interior=[0.4j], master_seed=11,
                              path_indices=np.arange(4))
    for k in range(n):
        ens_all.step(incs[:, k])
    ens_one = LoewnerEnsemble(1, dt, kappa, interior=[0.4j], master_seed=11,
                              path_indices=[2])
    for k in range(n):
        ens_one.step(incs[2:3, k])
    assert ens_all.nodes[0].y[2] == ens_one.nodes[0].y[0]
    assert ens_all.nodes[0].lwp[2] == ens_one.nodes[0].lwp[0]


def test_swallowing_is_monotone():
    # kappa=6 swallows interior points; once dead, lanes stay dead
    ens = LoewnerEnsemble(256, 1e-3, 6.0, interior=[0.6], master_seed=3,
                          path_indices=np.arange(256))
    rng = np.random.default_rng(0)
    dead_before = np.zeros(256, bool)
    for k in range(500):
        ens.step(math.sqrt(6.0 * 1e-3) * rng.standard_normal(256))
        dead_now = ~ens.nodes[0].alive
        assert np.all(dead_now | ~dead_before)
        dead_before = dead_now
    assert dead_before.any()          # some lanes actually swallowed
    taus = ens.nodes[0].tau[dead_before]
    assert np.all(np.isfinite(taus)) and np.all(taus > 0)


def test_w_of_swallowed_raises():
    d = constant_driver(0.0, 1e-3, 400)
    tr = LoewnerTracker(d, interior=[0.9])   # on the hull's path
    tr.run()
    assert not tr.alive(0)
    with pytest.raises(ValueError):
        tr.w_of(0)


def test_trace_kappa0_geodesic():
    d = constant_driver(0.0, 1e-3, 1000)
    g = trace(d, 20)
    assert abs(g[0] - 1.0) <= 2e-3             # starting point
    assert np.max(np.abs(g.imag)) < 1e-12      # on the segment [0, 1]
    assert np.all((g.real > 0) & (g.real <= 1))
    # endpoint matches the exact slit inner radius (1+r)^2/(4r) = e^t
    rr = np.roots([1, 2 - 4 * math.exp(1.0), 1])
    r_exact = rr[(rr > 0) & (rr < 1)][0].real
    assert g[-1].real == pytest.approx(r_exact, abs=1e-6)


def test_trace_containment():
    d = brownian_driver(8 / 3, 1e-3, 800, master_seed=17)
    g = trace(d, 100, eps_tip=1e-3)
    assert np.max(np.abs(g)) <= 1.0 + 2e-3


def test_trace_batch_matches_single():
    d = brownian_driver(2.0, 1e-3, 300, master_seed=23)
    gb = trace_batch(d.theta[None, :], d.dt, sample_every=100)[0]
    gs = trace(d, 3)
    assert np.allclose(gb, gs[1:], atol=1e-12)


def test_paired_ensemble_pair_logs():
    z1, z2 = 0.3 + 0.2j, -0.4 + 0.1j
    ens = PairedEnsemble(8, 1e-3, 2.0, interior=[z1, z2], master_seed=5,
                         path_indices=np.arange(8))
    rng = np.random.default_rng(2)
    for k in range(200):
        ens.step(math.sqrt(2e-3) * rng.standard_normal(8))
    y1, y2 = ens.nodes[0].y, ens.nodes[1].y
    # pair logs exponentiate to the actual differences / cross terms
    got = np.exp(ens.ldiff[(0, 1)])
    assert np.max(np.abs(got - (y1 - y2))) < 1e-9
    got = np.exp(ens.lcross[(0, 1)])
    assert np.max(np.abs(got - (1 - y1 * np.conj(y2)))) < 1e-9


def test_bad_step_size():
    with pytest.raises(ValueError):
        constant_driver(0.0, 0.0, 10)
    with pytest.raises(ValueError):
        LoewnerEnsemble(1, -1e-3, 2.0)


def test_tau_monotone_along_ray_statistically():
    # points nearer the curve's starting point swallow earlier on average
    N, dt, T = 1500, 1e-3, 1.0
    z_near, z_far = 0.85 * np.exp(0.3j), 0.6 * np.exp(0.3j)
    from radialsle.loewner import path_rng
    ens = LoewnerEnsemble(N, dt, 6.0, interior=[z_near, z_far],
                          master_seed=71, path_indices=np.arange(N))
    incs = np.vstack([math.sqrt(6 * dt) * path_rng(71, i, 0).standard_normal(1000)
                      for i in range(N)])
    for k in range(1000):
        ens.step(incs[:, k])
    t_near = np.minimum(ens.nodes[0].tau, T).mean()
    t_far = np.minimum(ens.nodes[1].tau, T).mean()
    assert t_near < t_far - 0.1
