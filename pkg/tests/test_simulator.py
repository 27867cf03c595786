import math

import numpy as np
import pytest

from aoi_lq import GameSpec, SensorPolicy, SimConfig, build_age_cost_table, cycle_error_cost, simulate, solve_game_riccati
from aoi_lq.errors import ConfigMismatch, Diverged, NonPositiveStep
from aoi_lq.simulator import empirical_cost_decomposition, simulate_batch

from conftest import SCALAR


def cfg(policy, T=50.0, dt=0.01, h=0.1, seed=0, **kw):
    return SimConfig(horizon_T=T, dt=dt, h=h, seed=seed, policy=policy, **kw)


def test_noise_free_system_stays_at_origin():
    spec = GameSpec(**SCALAR, G=0.0)
    sol = solve_game_riccati(spec)
    rec = simulate(spec, sol, cfg(SensorPolicy.deterministic(3, 0.1)))
    for arr in (rec.x, rec.x_hat, rec.e, rec.u1, rec.u2, rec.running_J):
        assert np.all(arr == 0.0)
    assert rec.J_empirical == 0.0 and rec.error_cost_empirical == 0.0


def test_sampling_every_step_zero_error_on_grid(scalar_spec, scalar_sol):
    h = 0.1
    rec = simulate(scalar_spec, scalar_sol, cfg(SensorPolicy.deterministic(1, h), T=20.0, dt=h))
    assert np.all(rec.sensed)
    assert np.all(rec.e == 0.0)


def test_error_cost_vanishes_with_dense_sampling(scalar_spec, scalar_sol):
    costs = []
    for h in (0.1, 0.01):
        recs = simulate_batch(scalar_spec, scalar_sol,
                              cfg(SensorPolicy.deterministic(1, h), T=200.0, dt=h, h=h,
                                  record_stride=0), range(5))
        costs.append(np.mean([r.error_cost_empirical for r in recs]))
    assert costs[1] < 0.2 * costs[0]
    assert costs[1] < 0.15


def test_same_seed_is_bit_identical(scalar_spec, scalar_sol):
    pol = SensorPolicy.deterministic(3, 0.1)
    a = simulate(scalar_spec, scalar_sol, cfg(pol, seed=7))
    b = simulate(scalar_spec, scalar_sol, cfg(pol, seed=7))
    c = simulate(scalar_spec, scalar_sol, cfg(pol, seed=8))
    assert np.array_equal(a.x, b.x) and np.array_equal(a.running_J, b.running_J)
    assert a.J_empirical == b.J_empirical
    assert not np.array_equal(a.x, c.x)


def test_batch_member_matches_single_run(scalar_spec, scalar_sol):
    pol = SensorPolicy.deterministic(3, 0.1)
    batch = simulate_batch(scalar_spec, scalar_sol, cfg(pol), [4, 5, 6])
    single = simulate(scalar_spec, scalar_sol, cfg(pol, seed=5))
    assert np.array_equal(batch[1].x, single.x)
    assert batch[1].J_empirical == single.J_empirical
    assert np.array_equal(batch[1].running_J, single.running_J)


def test_trajectory_invariants(scalar_spec, scalar_sol):
    pol = SensorPolicy(eta_1=3, eta_2=4, vartheta=0.5, lambda_star=1.0, b_1=1 / 0.3,
                       b_2=1 / 0.4, mode="Randomized", h=0.1, redraw="PerCycle")
    rec = simulate(scalar_spec, scalar_sol, cfg(pol, T=100.0, record_stride=1))
    np.testing.assert_array_equal(rec.e, rec.x - rec.x_hat)
    assert np.all(rec.e[rec.sensed] == 0.0)
    assert rec.sensed[0] and rec.times[0] == 0.0
    assert rec.n_T == int(rec.sensed.sum()) == len(rec.sample_times)
    np.testing.assert_allclose(rec.times[rec.sensed], rec.sample_times, atol=1e-9)
    assert set(np.round(np.diff(rec.sample_times), 9).tolist()) <= {0.3, 0.4}
    assert rec.rate_empirical == pytest.approx(rec.n_T / 100.0)
    np.testing.assert_allclose(rec.u1, -rec.x_hat * scalar_sol.K1[0, 0])
    np.testing.assert_allclose(rec.u2, rec.x * scalar_sol.K2[0, 0])
    assert np.all(np.diff(rec.times) > 0)


def test_sampling_rate_matches_threshold(scalar_spec, scalar_sol):
    T = 500.0
    rec = simulate(scalar_spec, scalar_sol, cfg(SensorPolicy.deterministic(3, 0.1), T=T,
                                                record_stride=0))
    assert abs(rec.rate_empirical - 1 / 0.3) <= 1 / T
    assert rec.times.size == 0


def test_initial_state_from_sigma0():
    spec = GameSpec(**SCALAR, Sigma0=4.0)
    sol = solve_game_riccati(spec)
    recs = simulate_batch(spec, sol, cfg(SensorPolicy.deterministic(2, 0.1), T=1.0), range(400))
    x0 = np.array([r.x[0, 0] for r in recs])
    assert np.all(np.array([r.e[0, 0] for r in recs]) == 0.0)
    assert np.var(x0) == pytest.approx(4.0, rel=0.2)


def test_vector_system_runs():
    A = np.array([[0.0, 1.0], [-1.0, 0.2]])
    spec = GameSpec(A=A, B1=np.array([[0.0], [1.0]]), B2=np.array([[0.1], [0.0]]),
                    Q=np.eye(2), R1=1.0, R2=2.0, G=np.array([[0.3], [1.0]]))
    sol = solve_game_riccati(spec)
    table = build_age_cost_table(sol, spec.G, 0.1, 16)
    recs = simulate_batch(spec, sol, cfg(SensorPolicy.deterministic(4, 0.1), T=400.0,
                                         record_stride=0), range(10))
    gap = np.mean([r.J_empirical for r in recs]) - sol.J_star
    ec = np.array([r.error_cost_empirical for r in recs])
    pred = cycle_error_cost(table, 0.4)
    assert abs(ec.mean() - pred) <= 4 * ec.std(ddof=1) / math.sqrt(len(ec)) + 0.02 * pred
    assert abs(gap - ec.mean()) <= 0.25 * max(pred, 0.1)


def test_policy_step_mismatch(scalar_spec, scalar_sol):
    with pytest.raises(ConfigMismatch):
        simulate(scalar_spec, scalar_sol, cfg(SensorPolicy.deterministic(3, 0.2)))


def test_divergence_guard(scalar_spec, scalar_sol):
    with pytest.raises(Diverged):
        simulate(scalar_spec, scalar_sol,
                 cfg(SensorPolicy.deterministic(50, 0.1), T=100.0, divergence_guard=1.0))


def test_config_validation():
    pol = SensorPolicy.deterministic(3, 0.1)
    with pytest.raises(NonPositiveStep):
        cfg(pol, dt=0.0)
    with pytest.raises(ValueError):
        cfg(pol, dt=0.03)
    with pytest.raises(ValueError):
        cfg(pol, T=0.05)
    with pytest.raises(ValueError):
        cfg(pol, scheme="rk4")
    with pytest.raises(ValueError):
        cfg(pol, seed=-1)
    with pytest.raises(ValueError):
        cfg(pol, record_stride=-1)


def test_cost_decomposition_helper(scalar_spec, scalar_sol):
    rec = simulate(scalar_spec, scalar_sol, cfg(SensorPolicy.deterministic(3, 0.1)))
    gap, ec = empirical_cost_decomposition(rec, scalar_sol.J_star)
    assert gap == rec.J_empirical - scalar_sol.J_star
    assert ec == rec.error_cost_empirical


def test_exact_scheme_matches_renewal_prediction(scalar_spec, scalar_sol):
    table = build_age_cost_table(scalar_sol, scalar_spec.G, 0.1, 8)
    pred = cycle_error_cost(table, 0.3)
    recs = simulate_batch(scalar_spec, scalar_sol,
                          cfg(SensorPolicy.deterministic(3, 0.1), T=1000.0, record_stride=0),
                          range(20))
    ec = np.array([r.error_cost_empirical for r in recs])
    # trapezoid quadrature on dt = 0.01 adds a small known bias
    assert abs(ec.mean() - pred) <= 4 * ec.std(ddof=1) / math.sqrt(len(ec)) + 1e-3 * pred


def test_euler_maruyama_bias_shrinks_linearly(scalar_spec, scalar_sol):
    table = build_age_cost_table(scalar_sol, scalar_spec.G, 0.1, 8)
    pred = cycle_error_cost(table, 0.4)
    bias = []
    for dt in (0.05, 0.025, 0.0125):
        recs = simulate_batch(scalar_spec, scalar_sol,
                              cfg(SensorPolicy.deterministic(4, 0.1), T=1000.0, dt=dt,
                                  record_stride=0, scheme="euler_maruyama"), range(40))
        bias.append(np.mean([r.error_cost_empirical for r in recs]) - pred)
    ratio = (bias[0] - bias[1]) / (bias[1] - bias[2])
    assert 1.2 <= ratio <= 3.2
    assert abs(bias[2]) < abs(bias[1]) < abs(bias[0])
