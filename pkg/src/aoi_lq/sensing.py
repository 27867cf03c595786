"""Sensor scheduling over the age of information (AoI).

The discrete AoI chain follows the convention

    age d, action s in {0, 1}:  stage cost U(d) + lam * s,
    next age = 1 if s == 1 else d + 1,

so a deterministic threshold ``eta`` repeats the renewal cycle
1 -> 2 -> ... -> eta -> (sample) with cycle cost lam + U(1) + ... + U(eta).

Note: some write-ups state the transition kernel with the roles of ``s``
and ``1 - s`` exchanged; the convention above is the one consistent with
the renewal cycle and with the threshold equation solved here.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .discretization import AgeCostTable
from .errors import (
    CapacityExceeded,
    NoConvergence,
    NonPositiveStep,
    TableExhausted,
    TruncationTooSmall,
)

log = logging.getLogger(__name__)

# relative tolerance for "rate equals budget"
RATE_RTOL = 1e-9


@dataclass(frozen=True)
class MdpConfig:
    lam: float = 0.0
    beta: float = 0.99
    N_max: int = 64
    vi_tol: float = 1e-8
    bisection_tol: float = 1e-4
    max_iter: int = 2_000_000

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.N_max < 2:
            raise ValueError("N_max must be at least 2")
        if self.vi_tol <= 0 or self.bisection_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class ThresholdSolution:
    eta_bar: int
    theta: float
    V_bar: float
    lam: float

    @property
    def threshold(self) -> float:
        return self.eta_bar + self.theta


class Mode(str, enum.Enum):
    DETERMINISTIC = "Deterministic"
    RANDOMIZED = "Randomized"


class Redraw(str, enum.Enum):
    ONCE = "Once"
    PER_CYCLE = "PerCycle"


@dataclass(frozen=True)
class SensorPolicy:
    """Bernoulli mixture of two AoI thresholds.

    With probability ``vartheta`` the active threshold is ``eta_1`` (rate
    ``b_1``), otherwise ``eta_2`` (rate ``b_2``).
    """

    eta_1: int
    eta_2: int
    vartheta: float
    lambda_star: float
    b_1: float
    b_2: float
    mode: Mode
    h: float
    redraw: Redraw = Redraw.ONCE
    V_bar: float = float("nan")
    budget: float = float("nan")

    @classmethod
    def deterministic(cls, eta: int, h: float, lambda_star: float = float("nan"),
                      V_bar: float = float("nan"), redraw: Redraw = Redraw.ONCE):
        rate = 1.0 / (eta * h)
        return cls(eta_1=int(eta), eta_2=int(eta), vartheta=1.0, lambda_star=lambda_star,
                   b_1=rate, b_2=rate, mode=Mode.DETERMINISTIC, h=h, redraw=Redraw(redraw),
                   V_bar=V_bar, budget=rate)

    @property
    def expected_rate(self) -> float:
        """Long-run expected samples per second under draw-once mixing."""
        if self.mode is Mode.DETERMINISTIC:
            return self.b_1
        return self.vartheta * self.b_1 + (1.0 - self.vartheta) * self.b_2

    @property
    def per_cycle_rate(self) -> float:
        """Realized rate when the threshold is redrawn after every sample."""
        if self.mode is Mode.DETERMINISTIC:
            return self.b_1
        mean_eta = self.vartheta * self.eta_1 + (1.0 - self.vartheta) * self.eta_2
        return 1.0 / (mean_eta * self.h)

    def with_redraw(self, redraw) -> "SensorPolicy":
        return SensorPolicy(**{**self.__dict__, "redraw": Redraw(redraw)})

    def to_dict(self) -> dict:
        return {
            "lambda_star": self.lambda_star,
            "eta_1": self.eta_1,
            "eta_2": self.eta_2,
            "vartheta": self.vartheta,
            "b_1": self.b_1,
            "b_2": self.b_2,
            "V_bar": self.V_bar,
            "mode": self.mode.value,
            "redraw": self.redraw.value,
            "h": self.h,
            "b": self.budget,
            "per_cycle_rate": self.per_cycle_rate,
        }


# ---------------------------------------------------------------------------
# threshold equation and closed-form cycle costs


def average_cost_of_threshold(table: AgeCostTable, eta: int, lam: float) -> float:
    """(lam + U(1) + ... + U(eta)) / eta: long-run cost of the threshold-eta cycle."""
    if eta < 1:
        raise ValueError("eta must be >= 1")
    table = table.extended(eta)
    return (lam + float(np.sum(table.U[1:eta + 1]))) / eta


def _breakpoints(U):
    """lam_k = k U(k+1) - (U(1)+...+U(k)) for k = 1..N-1.

    eta is optimal for every lam in [lam_{eta-1}, lam_eta] (lam_0 = 0).
    """
    S = np.cumsum(U[1:])
    k = np.arange(1, len(U) - 1)
    return k * U[2:] - S[:-1]


def solve_threshold_equation(table: AgeCostTable, lam: float) -> ThresholdSolution:
    """Integer threshold eta and fraction theta with U(eta+theta) eta = sum U(1..eta) + lam.

    Returns the smallest admissible eta (ties toward the smaller threshold).
    U at fractional age is the continuous error-covariance cost.
    """
    return _threshold(table, lam)[0]


def _threshold(table, lam):
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    while True:
        bp = _breakpoints(table.U)
        idx = int(np.searchsorted(bp, lam, side="left"))
        if idx < len(bp):
            break
        if table.saturated:
            raise TableExhausted(f"no threshold for lambda={lam:g}: sampling gains vanish")
        try:
            table = table.extended(2 * table.N_max)
        except CapacityExceeded as exc:
            raise TableExhausted(f"no threshold for lambda={lam:g} within table capacity") from exc
    eta = idx + 1
    g = (lam + float(np.sum(table.U[1:eta + 1]))) / eta

    def f(th):
        return table.u_at(eta + th) - g

    f0, f1 = f(0.0), f(1.0)
    if f0 >= 0.0:
        theta = 0.0
    elif f1 <= 0.0:
        theta = 1.0
    else:
        theta = optimize.brentq(f, 0.0, 1.0, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    return ThresholdSolution(eta_bar=eta, theta=float(theta), V_bar=g, lam=float(lam)), table


# ---------------------------------------------------------------------------
# dynamic programming checks


def _bellman(U, lam, beta, V):
    sense = U + lam + beta * V[0]
    wait = np.empty_like(U)
    wait[:-1] = U[:-1] + beta * V[1:]
    wait[-1] = np.inf  # forced sample at the truncation boundary
    return sense, wait


def discounted_value_iteration(table: AgeCostTable, cfg: MdpConfig):
    """Value iteration for the beta-discounted Lagrangian cost.

    Returns ``(V, threshold)`` where ``V[d-1]`` is the value at age d for
    d = 1..N_max and ``threshold`` is the smallest age at which sampling is
    optimal (ties favour sampling).  The greedy policy is checked to be of
    threshold form.

    The stopping test is the sup-norm Bellman residual over ages
    1..N_max/2, floored at a few ulps of the values themselves.
    """
    table = table.extended(cfg.N_max + 1)
    U = np.array(table.U[1:cfg.N_max + 1])
    lam, beta = cfg.lam, cfg.beta
    half = max(1, cfg.N_max // 2)
    V = np.zeros_like(U)
    for _ in range(cfg.max_iter):
        sense, wait = _bellman(U, lam, beta, V)
        TV = np.minimum(sense, wait)
        res = float(np.max(np.abs(TV[:half] - V[:half])))
        V = TV
        floor = 64 * np.finfo(float).eps * float(np.max(np.abs(V[:half])))
        if res * beta <= max(cfg.vi_tol, floor):
            break
    else:
        raise NoConvergence(f"value iteration did not reach {cfg.vi_tol:g}")

    sense, wait = _bellman(U, lam, beta, V)
    action = (sense <= wait).astype(int)
    threshold = int(np.argmax(action)) + 1
    if threshold >= cfg.N_max:
        raise TruncationTooSmall(f"no sampling below age {cfg.N_max}; enlarge N_max")
    if not np.all(action[threshold - 1:] == 1):
        raise AssertionError("greedy policy is not of threshold form")
    return V, threshold


def greedy_actions(table: AgeCostTable, V, lam: float, beta: float = 1.0) -> np.ndarray:
    """Greedy action per age for value vector ``V`` (1 = sample)."""
    U = np.array(table.U[1:len(V) + 1])
    sense, wait = _bellman(U, lam, beta, np.asarray(V))
    return (sense <= wait).astype(int)


def bellman_residual(table: AgeCostTable, V, lam: float, beta: float) -> np.ndarray:
    """|T V - V| per age for the discounted operator."""
    U = np.array(table.U[1:len(V) + 1])
    sense, wait = _bellman(U, lam, beta, np.asarray(V))
    return np.abs(np.minimum(sense, wait) - V)


def relative_value_iteration(table: AgeCostTable, lam: float, N_max: int = 64,
                             tol: float = 1e-10, max_iter: int = 2_000_000,
                             damping: float = 0.5):
    """Average-cost relative value iteration with age 1 as reference state.

    The damped update f <- (1-a) f + a (T f - T f(1)) breaks the periodicity
    of threshold cycles.  Returns ``(V_bar, f)`` with f(1) = 0 and
    V_bar + f(d) = min_s {U(d) + lam s + f(d')}.
    """
    table = table.extended(N_max + 1)
    U = np.array(table.U[1:N_max + 1])
    half = max(1, N_max // 2)
    f = np.zeros_like(U)
    for _ in range(max_iter):
        sense, wait = _bellman(U, lam, 1.0, f)
        Tf = np.minimum(sense, wait)
        new = Tf - Tf[0]
        res = float(np.max(np.abs(new[:half] - f[:half])))
        f = (1.0 - damping) * f + damping * new
        floor = 64 * np.finfo(float).eps * float(np.max(np.abs(Tf[:half])))
        if res <= max(tol, floor):
            break
    else:
        raise NoConvergence("relative value iteration did not converge")
    sense, wait = _bellman(U, lam, 1.0, f)
    return float(np.minimum(sense, wait)[0] - f[0]), f


def average_cost_bellman_residual(table: AgeCostTable, lam: float, V_bar: float, f) -> np.ndarray:
    """|V_bar + f(d) - min_s {U(d) + lam s + f(d')}| per age."""
    f = np.asarray(f)
    U = np.array(table.U[1:len(f) + 1])
    sense, wait = _bellman(U, lam, 1.0, f)
    return np.abs(V_bar + f - np.minimum(sense, wait))


def vanishing_discount_check(table: AgeCostTable, lam: float, betas, N_max: int = 64,
                             vi_tol: float = 1e-8):
    """(1 - beta) V_beta(1) for each beta; approaches the average cost as beta -> 1."""
    betas = list(betas)
    if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise ValueError("betas must be strictly increasing")
    out = []
    for beta in betas:
        V, _ = discounted_value_iteration(
            table, MdpConfig(lam=lam, beta=beta, N_max=N_max, vi_tol=vi_tol))
        out.append((1.0 - beta) * float(V[0]))
    return out


# ---------------------------------------------------------------------------
# Lagrange multiplier search


def _feasible(eta, bh):
    return eta is None or 1.0 / eta <= bh * (1.0 + RATE_RTOL)


def lagrange_bisection(table: AgeCostTable, b: float, h: float, eps: float = 1e-4,
                       redraw: Redraw = Redraw.ONCE, max_iter: int = 10_000) -> SensorPolicy:
    """Randomized threshold policy meeting the sampling budget ``b`` (samples/s).

    Brackets the multiplier with [lam1, lam2] such that the threshold at lam2
    respects 1/eta <= b h and the one at lam1 does not, then bisects until
    lam2 - lam1 < eps * max(1, lam2).  The bracket is grown geometrically.
    """
    if b <= 0:
        raise NonPositiveStep("budget b must be positive")
    if h <= 0 or eps <= 0:
        raise NonPositiveStep("h and eps must be positive")
    if abs(table.h - h) > 1e-12 * h:
        raise ValueError(f"table built for h={table.h}, policy requested for h={h}")
    bh = b * h
    redraw = Redraw(redraw)

    if not np.any(table.U[1:] > 0.0):
        # no estimation error to fight: every threshold costs zero, use the budget
        eta = max(1, math.ceil(1.0 / bh - RATE_RTOL))
        log.warning("age costs vanish; sampling at the budget with eta=%d", eta)
        return SensorPolicy.deterministic(eta, h, lambda_star=0.0, V_bar=0.0, redraw=redraw)

    cache = {}
    current = [table]

    def solve(lam):
        if lam not in cache:
            try:
                cache[lam], current[0] = _threshold(current[0], lam)
            except TableExhausted:
                cache[lam] = None
        return cache[lam]

    def eta_of(sol):
        return None if sol is None else sol.eta_bar

    s0 = solve(0.0)
    if _feasible(eta_of(s0), bh):
        return _policy_from(s0, s0, b, h, redraw)

    lo, hi = 0.0, 1.0
    s_lo, s_hi = s0, solve(hi)
    n = 0
    while not _feasible(eta_of(s_hi), bh):
        lo, s_lo = hi, s_hi
        hi *= 2.0
        s_hi = solve(hi)
        n += 1
        if n > max_iter or not math.isfinite(hi):
            raise NoConvergence("could not bracket the Lagrange multiplier")

    while hi - lo >= eps * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        s_mid = solve(mid)
        if _feasible(eta_of(s_mid), bh):
            hi, s_hi = mid, s_mid
        else:
            lo, s_lo = mid, s_mid
        n += 1
        if n > max_iter:
            raise NoConvergence("bisection exceeded iteration cap")

    if s_hi is None:
        raise TableExhausted("feasible threshold lies beyond the table capacity")
    return _policy_from(s_lo, s_hi, b, h, redraw)


def _policy_from(s_lo, s_hi, b, h, redraw):
    eta1, eta2 = s_lo.eta_bar, s_hi.eta_bar
    b1, b2 = 1.0 / (eta1 * h), 1.0 / (eta2 * h)
    if abs(b2 - b) <= RATE_RTOL * b or eta1 == eta2:
        return SensorPolicy(eta_1=eta2, eta_2=eta2, vartheta=1.0, lambda_star=s_hi.lam,
                            b_1=b2, b_2=b2, mode=Mode.DETERMINISTIC, h=h, redraw=redraw,
                            V_bar=s_hi.V_bar, budget=b)
    vartheta = (b - b2) / (b1 - b2)
    return SensorPolicy(eta_1=eta1, eta_2=eta2, vartheta=vartheta, lambda_star=s_hi.lam,
                        b_1=b1, b_2=b2, mode=Mode.RANDOMIZED, h=h, redraw=redraw,
                        V_bar=s_hi.V_bar, budget=b)


# ---------------------------------------------------------------------------
# runtime decisions


class SensorState:
    """Mutable per-run sampling state: the RNG and the active threshold."""

    def __init__(self, policy: SensorPolicy, rng: np.random.Generator):
        self.policy = policy
        self.rng = rng
        self.active = self._draw()

    def _draw(self) -> int:
        p = self.policy
        if p.mode is Mode.DETERMINISTIC:
            return p.eta_1
        return p.eta_1 if self.rng.random() < p.vartheta else p.eta_2


def activate(policy: SensorPolicy, rng: np.random.Generator) -> SensorState:
    return SensorState(policy, rng)


def next_sensing_decision(policy: SensorPolicy, age: int, state: SensorState) -> int:
    """1 iff ``age`` has reached the active threshold.

    Under ``PerCycle`` redraw the threshold is redrawn after each sample.
    """
    if age < 1:
        raise ValueError("age must be >= 1")
    if age >= state.active:
        if policy.redraw is Redraw.PER_CYCLE:
            state.active = state._draw()
        return 1
    return 0


def sensing_schedule(policy: SensorPolicy, n_steps: int, rng: np.random.Generator,
                     sample_at_start: bool = True) -> np.ndarray:
    """Boolean sampling flags on ``n_steps`` grid points.

    The estimate starts from the true initial state, so grid point 0 acts
    as the first sample either way; ``sample_at_start`` only decides whether
    it is flagged (and counted).  The age then counts grid steps since the
    last sample.
    """
    state = activate(policy, rng)
    flags = np.zeros(n_steps, dtype=bool)
    if n_steps == 0:
        return flags
    flags[0] = sample_at_start
    age = 1
    for k in range(1, n_steps):
        if next_sensing_decision(policy, age, state):
            flags[k] = True
            age = 1
        else:
            age += 1
    return flags
