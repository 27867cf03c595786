import math

import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from aoi_lq import GameSpec, security_level, solve_game_riccati, transformed_are_residual
from aoi_lq.errors import DimensionMismatch, InvalidSpec, NoStabilizingSolution, NonFinite
from aoi_lq.game import gare_residual


def quadratic_root(a, b1, b2, q, r1, r2):
    """Positive root of 2 a p + q + (b2^2/r2 - b1^2/r1) p^2 = 0."""
    c2 = b2 ** 2 / r2 - b1 ** 2 / r1
    disc = 4 * a * a - 4 * c2 * q
    roots = [(-2 * a + s * math.sqrt(disc)) / (2 * c2) for s in (1, -1)]
    return max(r for r in roots if r >= 0)


def kron_lyap(A, C):
    """X with A^T X + X A + C = 0 via the Kronecker form (column-major vec)."""
    n = A.shape[0]
    I = np.eye(n)
    K = np.kron(I, A.T) + np.kron(A.T, I)
    return np.linalg.solve(K, -C.reshape(-1, order="F")).reshape(n, n, order="F")


def newton_kleinman(A, B, Q, R, K0, iters=60):
    """Independent LQR oracle: Newton-Kleinman from a stabilizing gain."""
    K = K0
    Rinv = np.linalg.inv(R)
    for _ in range(iters):
        Ak = A - B @ K
        P = kron_lyap(Ak, Q + K.T @ R @ K)
        K = Rinv @ B.T @ P
    return P


def test_scalar_reference_values(scalar_spec, scalar_sol):
    p = quadratic_root(0.5, 1.0, 0.5, 4.0, 1.0, 0.5)
    assert p == pytest.approx(4.0, abs=1e-12)
    sol = scalar_sol
    assert sol.P[0, 0] == pytest.approx(p, abs=1e-9)
    assert sol.K1[0, 0] == pytest.approx(4.0, abs=1e-9)
    assert sol.K2[0, 0] == pytest.approx(4.0, abs=1e-9)
    assert sol.A_tilde[0, 0] == pytest.approx(2.5, abs=1e-9)
    assert sol.Q_tilde[0, 0] == pytest.approx(-4.0, abs=1e-9)
    assert sol.M1[0, 0] == pytest.approx(16.0, abs=1e-8)
    assert sol.J_star == pytest.approx(4.0, abs=1e-9)
    assert sol.A_closed[0, 0] == pytest.approx(-1.5, abs=1e-9)
    assert transformed_are_residual(sol, scalar_spec) <= 1e-9
    assert sol.stabilizing and sol.psd


def test_zero_weight_open_loop_stable_gives_zero():
    spec = GameSpec(A=-1.0, B1=1.0, B2=0.0, Q=0.0, R1=1.0, R2=1.0)
    sol = solve_game_riccati(spec)
    assert np.all(sol.P == pytest.approx(0.0, abs=1e-12))
    assert np.all(sol.K1 == pytest.approx(0.0, abs=1e-12))


def test_zero_weight_marginal_system_gives_zero_solution():
    spec = GameSpec(A=0.0, B1=1.0, B2=0.0, Q=0.0, R1=1.0, R2=1.0)
    sol = solve_game_riccati(spec)
    assert sol.P[0, 0] == pytest.approx(0.0, abs=1e-12)


def test_lqr_limit_matches_newton_kleinman():
    rng = np.random.default_rng(3)
    n, m = 3, 2
    A = rng.normal(size=(n, n))
    B1 = rng.normal(size=(n, m))
    Q = np.eye(n)
    R1 = np.eye(m)
    spec = GameSpec(A=A, B1=B1, B2=np.zeros((n, 1)), Q=Q, R1=R1, R2=np.eye(1))
    sol = solve_game_riccati(spec)
    # stabilizing start: shift by a large multiple of B^T
    shift = np.abs(np.linalg.eigvals(A)).max() + 1
    K0 = np.linalg.lstsq(B1, A + shift * np.eye(n), rcond=None)[0]
    if np.linalg.eigvals(A - B1 @ K0).real.max() >= 0:
        K0 = B1.T * 50.0
    assert np.linalg.eigvals(A - B1 @ K0).real.max() < 0
    P_ref = newton_kleinman(A, B1, Q, R1, K0)
    np.testing.assert_allclose(sol.P, P_ref, atol=1e-9)


@pytest.mark.parametrize("P,G,expected", [
    (np.eye(2), np.eye(2), 2.0),
    (np.diag([4.0]), np.array([[2.0]]), 16.0),
    (np.array([[2.0, 1.0], [1.0, 3.0]]), np.array([[1.0], [1.0]]), 7.0),
])
def test_security_level_examples(P, G, expected):
    assert security_level(P, G) == pytest.approx(expected, rel=1e-14)


def test_security_level_scales_with_g_squared(scalar_sol):
    for g in (0.5, 1.0, 3.0):
        assert security_level(scalar_sol.P, np.array([[g]])) == pytest.approx(4 * g * g)


def test_security_level_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        security_level(np.eye(2), np.eye(3))


@st.composite
def random_games(draw):
    seed = draw(st.integers(0, 2 ** 31 - 1))
    n = draw(st.integers(1, 4))
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    B1 = rng.normal(size=(n, draw(st.integers(1, 3))))
    B2 = 0.2 * rng.normal(size=(n, draw(st.integers(1, 2))))
    C = rng.normal(size=(n, n))
    Q = C @ C.T + 0.1 * np.eye(n)
    D1 = rng.normal(size=(B1.shape[1],) * 2)
    R1 = D1 @ D1.T + np.eye(B1.shape[1])
    R2 = np.eye(B2.shape[1]) * draw(st.floats(1.0, 5.0))
    return GameSpec(A=A, B1=B1, B2=B2, Q=Q, R1=R1, R2=R2)


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(random_games())
def test_solution_invariants(spec):
    try:
        sol = solve_game_riccati(spec)
    except NoStabilizingSolution:
        assume(False)
    P = sol.P
    scale = max(1.0, np.abs(P).max())
    np.testing.assert_allclose(P, P.T, atol=1e-12 * scale)
    assert np.abs(gare_residual(spec, P)).max() <= 1e-8 * scale ** 2
    np.testing.assert_allclose(sol.K1, np.linalg.solve(spec.R1, spec.B1.T @ P), atol=1e-10 * scale)
    np.testing.assert_allclose(sol.K2, np.linalg.solve(spec.R2, spec.B2.T @ P), atol=1e-10 * scale)
    assert np.linalg.eigvals(sol.A_closed).real.max() < 0
    assert np.linalg.eigvalsh(P).min() >= -1e-9 * scale
    assert transformed_are_residual(sol, spec) <= 1e-8 * scale ** 2
    assert sol.J_star == pytest.approx(np.trace(P), rel=1e-12)


def test_ill_posed_game_has_no_solution():
    # disturbance too strong: 7 p^2 + p + 4 = 0 has no real root
    spec = GameSpec(A=0.5, B1=1.0, B2=2.0, Q=4.0, R1=1.0, R2=0.5)
    with pytest.raises(NoStabilizingSolution):
        solve_game_riccati(spec)


def test_validation_errors():
    with pytest.raises(InvalidSpec, match="R1 must be positive definite"):
        GameSpec(A=0.5, B1=1.0, B2=0.5, Q=4.0, R1=0.0, R2=0.5)
    with pytest.raises(InvalidSpec, match="R2"):
        GameSpec(A=0.5, B1=1.0, B2=0.5, Q=4.0, R1=1.0, R2=-1.0)
    with pytest.raises(InvalidSpec, match="Q"):
        GameSpec(A=0.5, B1=1.0, B2=0.5, Q=-4.0, R1=1.0, R2=0.5)
    with pytest.raises(DimensionMismatch):
        GameSpec(A=np.eye(2), B1=np.ones((3, 1)), B2=np.ones((2, 1)), Q=np.eye(2), R1=1.0, R2=1.0)
    with pytest.raises(DimensionMismatch):
        GameSpec(A=np.ones((2, 3)), B1=1.0, B2=1.0, Q=1.0, R1=1.0, R2=1.0)
    with pytest.raises(NonFinite):
        GameSpec(A=float("nan"), B1=1.0, B2=0.5, Q=4.0, R1=1.0, R2=0.5)


def test_defaults_for_noise_and_initial_covariance(scalar_spec):
    assert np.array_equal(scalar_spec.G, np.eye(1))
    assert np.array_equal(scalar_spec.Sigma0, np.zeros((1, 1)))


def test_indefinite_transformed_weight_is_logged(scalar_spec, caplog):
    with caplog.at_level("WARNING"):
        solve_game_riccati(scalar_spec)
    assert any("indefinite" in r.getMessage() for r in caplog.records)
