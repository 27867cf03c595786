"""Cost-vs-h, cost-vs-budget sweeps and the single-trajectory showcase."""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .discretization import build_age_cost_table, cycle_error_cost, default_table_size, error_covariance
from .game import GameSolution, GameSpec, solve_game_riccati
from .sensing import Mode, Redraw, SensorPolicy, lagrange_bisection
from .simulator import DEFAULT_GUARD, SimConfig, TrajectoryRecord, simulate, simulate_batch

DEFAULT_SEEDS = 20
DEFAULT_T = 5000.0
DT_FLOOR = 1e-3
FIG1_H = (0.5, 0.25, 0.1, 0.05)
FIG2_B = (0.1, 0.2, 0.4, 0.8, 1.6, 3.2)


@dataclass
class SweepResult:
    axis_name: str
    axis_values: np.ndarray
    mean_cost: np.ndarray
    stderr: np.ndarray
    seeds_per_point: int
    J_star: float
    manifest: str
    predicted_cost: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mean_error_cost: np.ndarray = field(default_factory=lambda: np.zeros(0))
    policies: list = field(default_factory=list)

    def rows(self):
        for v, m, s, p in zip(self.axis_values, self.mean_cost, self.stderr, self.predicted_cost):
            yield {"axis_value": float(v), "mean_cost": float(m), "stderr": float(s),
                   "n_seeds": self.seeds_per_point, "J_star": self.J_star,
                   "predicted_cost": float(p)}


def default_dt(h: float, floor: float = DT_FLOOR) -> float:
    """h/10, coarsened so that dt >= floor while still dividing h."""
    m = max(1, min(10, int(math.floor(h / floor + 1e-9))))
    return h / m


def policy_for(spec: GameSpec, sol: GameSolution, b: float, h: float, eps: float = 1e-4,
               redraw: Redraw = Redraw.ONCE):
    table = build_age_cost_table(sol, spec.G, h, default_table_size(b, h))
    return lagrange_bisection(table, b, h, eps=eps, redraw=redraw), table


def predicted_cost(table, policy: SensorPolicy, J_star: float) -> float:
    """Renewal-reward prediction J* + E[cycle-average weighted error power].

    Exact for draw-once mixing; the dt-grid of a simulation adds only
    quadrature error.
    """
    h = policy.h
    c1 = cycle_error_cost(table, policy.eta_1 * h)
    if policy.mode is Mode.DETERMINISTIC:
        return J_star + c1
    c2 = cycle_error_cost(table, policy.eta_2 * h)
    return J_star + policy.vartheta * c1 + (1.0 - policy.vartheta) * c2


def suggested_guard(table, policy: SensorPolicy) -> float:
    """Divergence guard scaled to the largest error spread the policy allows."""
    eta = max(policy.eta_1, policy.eta_2)
    cov = error_covariance(table.A_tilde, table.G, eta * policy.h)
    spread = math.sqrt(max(float(np.linalg.eigvalsh(cov).max()), 0.0))
    return max(DEFAULT_GUARD, 1e3 * spread)


def _thread_cap() -> int:
    try:
        return max(1, int(os.environ.get("AOI_LQ_THREADS", "1")))
    except ValueError:
        return 1


def _run_point(args):
    spec, sol, cfg, seeds = args
    recs = simulate_batch(spec, sol, cfg, seeds)
    return [(r.seed, r.J_empirical, r.error_cost_empirical) for r in recs]


def _pooled(values):
    vals = np.array([v for _, v in sorted(values)])
    mean = math.fsum(vals) / len(vals)
    se = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return mean, se


def _sweep(spec, axis_name, points, seeds, T, base_seed, scheme, eps, redraw, manifest):
    sol = solve_game_riccati(spec)
    seed_list = [base_seed + i for i in range(seeds)]
    jobs, meta = [], []
    for b, h in points:
        policy, table = policy_for(spec, sol, b, h, eps=eps, redraw=redraw)
        cfg = SimConfig(horizon_T=T, dt=default_dt(h), h=h, seed=base_seed, policy=policy,
                        record_stride=0, scheme=scheme,
                        divergence_guard=suggested_guard(table, policy))
        jobs.append((spec, sol, cfg, seed_list))
        meta.append((policy, predicted_cost(table, policy, sol.J_star)))

    workers = min(_thread_cap(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_point, jobs))
    else:
        results = [_run_point(j) for j in jobs]

    means, ses, ecs = [], [], []
    for res in results:
        m, s = _pooled([(sd, J) for sd, J, _ in res])
        means.append(m)
        ses.append(s)
        ecs.append(_pooled([(sd, E) for sd, _, E in res])[0])
    axis = [b if axis_name == "b" else h for b, h in points]
    return SweepResult(
        axis_name=axis_name, axis_values=np.array(axis, dtype=float),
        mean_cost=np.array(means), stderr=np.array(ses), seeds_per_point=seeds,
        J_star=sol.J_star, manifest=json.dumps(manifest, sort_keys=True),
        predicted_cost=np.array([p for _, p in meta]), mean_error_cost=np.array(ecs),
        policies=[pol.to_dict() for pol, _ in meta],
    )


def _manifest(spec, axis, values, fixed, seeds, T, base_seed, scheme, eps, redraw):
    game = {k: getattr(spec, k).tolist() for k in ("A", "B1", "B2", "G", "Q", "R1", "R2", "Sigma0")}
    sensing = {"b": fixed, "h": values[0]} if axis == "h" else {"b": values[0], "h": fixed}
    return {
        "game": game,
        "sensing": sensing,
        "mdp": {"bisection_tol": eps},
        "sim": {"T": T, "seed": base_seed, "scheme": scheme, "redraw": Redraw(redraw).value},
        "sweep": {"axis": axis, "values": list(map(float, values)), "seeds": seeds},
    }


def sweep_h(spec: GameSpec, b: float, h_values=FIG1_H, seeds: int = DEFAULT_SEEDS,
            T: float = DEFAULT_T, base_seed: int = 0, scheme: str = "exact",
            eps: float = 1e-4, redraw: Redraw = Redraw.ONCE) -> SweepResult:
    """Mean closed-loop cost of the budget-b policy for each sampling step h."""
    if b <= 0 or any(h <= 0 for h in h_values):
        raise ValueError("b and all h must be positive")
    manifest = _manifest(spec, "h", h_values, b, seeds, T, base_seed, scheme, eps, redraw)
    return _sweep(spec, "h", [(b, h) for h in h_values], seeds, T, base_seed, scheme, eps,
                  redraw, manifest)


def sweep_budget(spec: GameSpec, h: float, b_values=FIG2_B, seeds: int = DEFAULT_SEEDS,
                 T: float = DEFAULT_T, base_seed: int = 0, scheme: str = "exact",
                 eps: float = 1e-4, redraw: Redraw = Redraw.ONCE) -> SweepResult:
    """Mean closed-loop cost at sampling step h for each budget b."""
    if h <= 0 or any(b <= 0 for b in b_values):
        raise ValueError("h and all b must be positive")
    manifest = _manifest(spec, "b", b_values, h, seeds, T, base_seed, scheme, eps, redraw)
    return _sweep(spec, "b", [(b, h) for b in b_values], seeds, T, base_seed, scheme, eps,
                  redraw, manifest)


def showcase_run(spec: GameSpec, b: float, h: float, T: float, seed: int = 0,
                 dt: float | None = None, record_stride: int | None = None,
                 scheme: str = "exact", redraw: Redraw = Redraw.ONCE):
    """One recorded closed-loop trajectory under the budget-b policy.

    Returns ``(record, policy, solution)``.
    """
    sol = solve_game_riccati(spec)
    policy, table = policy_for(spec, sol, b, h, redraw=redraw)
    dt = default_dt(h) if dt is None else dt
    if record_stride is None:
        record_stride = max(1, int(round(0.01 / dt)))
    cfg = SimConfig(horizon_T=T, dt=dt, h=h, seed=seed, policy=policy,
                    record_stride=record_stride, scheme=scheme,
                    divergence_guard=suggested_guard(table, policy))
    return simulate(spec, sol, cfg), policy, sol


def trend_violations(result: SweepResult, n_se: float = 2.0, increasing_axis_lowers_cost=True):
    """Indices i where cost fails to be nonincreasing from point i to i+1 within n_se pooled SE.

    Points are visited in the direction in which cost should fall: increasing
    budget, decreasing h.
    """
    order = np.argsort(result.axis_values)
    if not increasing_axis_lowers_cost:
        order = order[::-1]
    out = []
    for i, j in zip(order[:-1], order[1:]):
        pooled = math.hypot(result.stderr[i], result.stderr[j])
        if result.mean_cost[j] > result.mean_cost[i] + n_se * pooled:
            out.append(int(i))
    return out
