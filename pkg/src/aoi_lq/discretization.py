"""Sampling-grid quantities: transition matrices, noise Gramians, age costs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg

from .errors import CapacityExceeded, DimensionMismatch, NonFinite, NonPositiveStep
from .game import GameSolution

# hard ceiling for auto-extension of age-cost tables
MAX_TABLE_SIZE = 1 << 22


def _finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFinite("input contains non-finite entries")


def state_transition(A_tilde, t: float) -> np.ndarray:
    """exp(A_tilde * t), t >= 0 (scaling-and-squaring Pade via scipy)."""
    A = np.atleast_2d(np.asarray(A_tilde, dtype=float))
    _finite(A, np.asarray(t, dtype=float))
    if t < 0:
        raise NonPositiveStep(f"t must be non-negative, got {t}")
    if t == 0:
        return np.eye(A.shape[0])
    return linalg.expm(A * t)


def noise_gramian(A_tilde, G, h: float) -> np.ndarray:
    """Integral of e^{As} G G^T e^{A^T s} over [0, h].

    Uses the Van Loan block exponential of [[-A, GG^T], [0, A^T]] h, whose
    upper-right block premultiplied by the transposed lower-right block is
    the Gramian.
    """
    A = np.atleast_2d(np.asarray(A_tilde, dtype=float))
    G = np.atleast_2d(np.asarray(G, dtype=float))
    _finite(A, G, np.asarray(h, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n) or G.shape[0] != n:
        raise DimensionMismatch(f"incompatible shapes A{A.shape}, G{G.shape}")
    if h <= 0:
        raise NonPositiveStep(f"h must be positive, got {h}")
    W = G @ G.T
    C = np.zeros((2 * n, 2 * n))
    C[:n, :n] = -A
    C[:n, n:] = W
    C[n:, n:] = A.T
    E = linalg.expm(C * h)
    gram = E[n:, n:].T @ E[:n, n:]
    return 0.5 * (gram + gram.T)


def error_covariance(A_tilde, G, age: float) -> np.ndarray:
    """Covariance of the estimation error ``age`` seconds after a sample."""
    A = np.atleast_2d(np.asarray(A_tilde, dtype=float))
    if age < 0:
        raise NonPositiveStep(f"age must be non-negative, got {age}")
    if age == 0:
        _finite(A, np.asarray(G, dtype=float))
        return np.zeros_like(A)
    return noise_gramian(A, G, age)


def default_table_size(b: float, h: float) -> int:
    return 10 * math.ceil(1.0 / (b * h))


@dataclass(frozen=True)
class AgeCostTable:
    """Age costs U(0..N_max) for sampling step ``h``.

    ``U[d]`` is tr(M1 Sigma_e(d h)): the expected weighted squared
    estimation error after ``d`` steps without a sample.  The table also
    keeps ``A_tilde``, ``G`` and ``M1`` so it can be extended and evaluated
    at fractional ages.
    """

    h: float
    Phi_h: np.ndarray
    G_tilde_h: np.ndarray
    U: np.ndarray
    N_max: int
    A_tilde: np.ndarray
    G: np.ndarray
    M1: np.ndarray

    def __post_init__(self):
        for a in (self.Phi_h, self.G_tilde_h, self.U, self.A_tilde, self.G, self.M1):
            a.setflags(write=False)

    def __len__(self):
        return self.N_max + 1

    def u_at(self, age: float) -> float:
        """tr(M1 Sigma_e(age h)) for real ``age`` (continuous covariance, no interpolation)."""
        return float(np.trace(self.M1 @ error_covariance(self.A_tilde, self.G, age * self.h)))

    @property
    def saturated(self) -> bool:
        """True when the last increments vanish relative to U (extension cannot help)."""
        U = self.U
        if self.N_max < 2:
            return False
        return U[-1] - U[-2] <= 1e-15 * max(abs(U[-1]), 1e-300)

    def extended(self, n_required: int) -> "AgeCostTable":
        """Return a table covering at least ``n_required`` by repeated doubling."""
        if n_required <= self.N_max:
            return self
        size = self.N_max
        while size < n_required:
            size *= 2
        if size > MAX_TABLE_SIZE:
            raise CapacityExceeded(f"age-cost table would need {size} entries")
        return _build(self.A_tilde, self.G, self.M1, self.h, size,
                      Phi_h=self.Phi_h, G_h=self.G_tilde_h)


def _build(A_tilde, G, M1, h, N_max, Phi_h=None, G_h=None):
    Phi_h = state_transition(A_tilde, h) if Phi_h is None else Phi_h
    G_h = noise_gramian(A_tilde, G, h) if G_h is None else G_h
    U = np.empty(N_max + 1)
    U[0] = 0.0
    Phi_i = np.eye(A_tilde.shape[0])
    acc = 0.0
    for d in range(1, N_max + 1):
        acc += float(np.trace(M1 @ Phi_i @ G_h @ Phi_i.T))
        U[d] = acc
        Phi_i = Phi_h @ Phi_i
    if not np.all(np.isfinite(U)):
        raise CapacityExceeded("age costs overflow before reaching the requested capacity")
    # guard against rounding making the cumulative sum non-monotone
    np.maximum.accumulate(U, out=U)
    return AgeCostTable(h=float(h), Phi_h=Phi_h, G_tilde_h=G_h, U=U, N_max=int(N_max),
                        A_tilde=np.array(A_tilde, dtype=float), G=np.array(G, dtype=float),
                        M1=np.array(M1, dtype=float))


def build_age_cost_table(sol: GameSolution, G, h: float, N_max: int) -> AgeCostTable:
    """U(d) = U(d-1) + tr(M1 Phi((d-1)h) G_h Phi((d-1)h)^T), d = 1..N_max."""
    if h <= 0:
        raise NonPositiveStep(f"h must be positive, got {h}")
    if N_max < 2:
        raise ValueError("N_max must be at least 2")
    G = np.atleast_2d(np.asarray(G, dtype=float))
    return _build(sol.A_tilde, G, sol.M1, h, int(N_max))


def cycle_error_cost(table: AgeCostTable, period: float) -> float:
    """Time average of tr(M1 Sigma_e(s)) over a sampling cycle of ``period`` seconds.

    This is the renewal-reward prediction of the weighted estimation error
    power for a policy that samples exactly every ``period`` seconds.
    """
    if period <= 0:
        raise NonPositiveStep(f"period must be positive, got {period}")
    A, G, M1 = table.A_tilde, table.G, table.M1

    def f(s):
        return float(np.trace(M1 @ error_covariance(A, G, s)))

    val, _ = integrate.quad(f, 0.0, period, epsabs=0.0, epsrel=1e-11, limit=200)
    return val / period
