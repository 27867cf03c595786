"""Command-line entry point: ``aoi-lq {solve,policy,simulate,sweep}``.

Exit status: 0 success, 1 configuration or usage error, 2 numerical failure
(no stabilizing Riccati solution, divergence, exhausted tables, ...).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .discretization import build_age_cost_table, default_table_size
from .errors import MATH_ERRORS, AoiLqError
from .experiments import (
    FIG1_H,
    FIG2_B,
    default_dt,
    predicted_cost,
    suggested_guard,
    sweep_budget,
    sweep_h,
)
from .game import solve_game_riccati
from .sensing import (
    MdpConfig,
    Redraw,
    SensorPolicy,
    discounted_value_iteration,
    greedy_actions,
    lagrange_bisection,
)
from .simulator import SimConfig, simulate

log = logging.getLogger("aoi_lq")


def _num(x) -> str:
    return format(float(x), ".17g")


def _clean(obj):
    """JSON-safe copy: NaN/inf become null, numpy scalars become Python numbers."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _write_json(path: Path, obj):
    path.write_text(json.dumps(_clean(obj), indent=2) + "\n")


def _output_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.output or cfg.output_dir or ".")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _header(spec, cfg: RunConfig) -> dict:
    return {"G": spec.G.tolist(), "Sigma0": spec.Sigma0.tolist(), "version": __version__}


def _policy(spec, sol, cfg: RunConfig):
    s = cfg.require_sensing()
    table = build_age_cost_table(sol, spec.G, s.h, default_table_size(s.b, s.h))
    policy = lagrange_bisection(table, s.b, s.h, eps=cfg.mdp.bisection_tol,
                                redraw=Redraw(cfg.sim.redraw))
    return policy, table


def cmd_solve(args, cfg: RunConfig) -> int:
    spec = cfg.game_spec()
    out = _output_dir(args, cfg)
    sol = solve_game_riccati(spec, tol=cfg.solver.tol, max_iter=cfg.solver.max_iter)
    _write_json(out / "solution.json", sol.to_dict())
    return 0


def cmd_policy(args, cfg: RunConfig) -> int:
    spec = cfg.game_spec()
    out = _output_dir(args, cfg)
    sol = solve_game_riccati(spec, tol=cfg.solver.tol, max_iter=cfg.solver.max_iter)
    policy, table = _policy(spec, sol, cfg)
    doc = policy.to_dict()
    doc["header"] = _header(spec, cfg)
    _write_json(out / "policy.json", doc)

    if args.dump_age_costs:
        with open(out / "age_costs.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["delta", "u"])
            for d, u in enumerate(table.U):
                w.writerow([d, _num(u)])
    if args.dump_vi:
        lam = cfg.mdp.lam if cfg.mdp.lam is not None else policy.lambda_star
        n_states = max(cfg.mdp.N_max, 2 * policy.eta_2 + 2)
        mcfg = MdpConfig(lam=lam, beta=cfg.mdp.beta, N_max=n_states, vi_tol=cfg.mdp.vi_tol)
        V, _ = discounted_value_iteration(table, mcfg)
        act = greedy_actions(table.extended(n_states + 1), V, lam, cfg.mdp.beta)
        with open(out / "vi.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["delta", "value", "action"])
            for d, (v, a) in enumerate(zip(V, act), start=1):
                w.writerow([d, _num(v), int(a)])
    return 0


def _trajectory_csv(path: Path, rec, n, m1, m2):
    cols = (["t"] + [f"x_{i+1}" for i in range(n)] + [f"xhat_{i+1}" for i in range(n)]
            + [f"e_{i+1}" for i in range(n)] + [f"u1_{i+1}" for i in range(m1)]
            + [f"u2_{i+1}" for i in range(m2)] + ["sensed", "running_J"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for k in range(len(rec.times)):
            row = [_num(rec.times[k])]
            row += [_num(v) for v in rec.x[k]]
            row += [_num(v) for v in rec.x_hat[k]]
            row += [_num(v) for v in rec.e[k]]
            row += [_num(v) for v in rec.u1[k]]
            row += [_num(v) for v in rec.u2[k]]
            row += [int(rec.sensed[k]), _num(rec.running_J[k])]
            w.writerow(row)


def cmd_simulate(args, cfg: RunConfig) -> int:
    spec = cfg.game_spec()
    out = _output_dir(args, cfg)
    sol = solve_game_riccati(spec, tol=cfg.solver.tol, max_iter=cfg.solver.max_iter)
    s = cfg.require_sensing()
    sim = cfg.sim
    policy, table = _policy(spec, sol, cfg) if sim.eta is None else (None, None)
    if policy is None:
        table = build_age_cost_table(sol, spec.G, s.h, max(2 * sim.eta, 16))
        policy = SensorPolicy.deterministic(sim.eta, s.h)
    dt = sim.dt if sim.dt is not None else default_dt(s.h)
    stride = sim.record_stride if sim.record_stride is not None else max(1, int(round(0.01 / dt)))
    guard = sim.divergence_guard if sim.divergence_guard is not None else suggested_guard(table, policy)
    try:
        scfg = SimConfig(horizon_T=sim.T, dt=dt, h=s.h, seed=sim.seed, policy=policy,
                         record_stride=stride, scheme=sim.scheme, divergence_guard=guard)
    except ValueError as exc:
        raise ConfigError(f"sim: {exc}") from None
    rec = simulate(spec, sol, scfg)
    _trajectory_csv(out / "trajectory.csv", rec, spec.n, spec.m1, spec.m2)
    summary = rec.summary(sol.J_star)
    summary.update({
        "predicted_cost": predicted_cost(table, policy, sol.J_star),
        "horizon_T": rec.horizon_T, "burn_in": 0.0, "dt": dt, "h": s.h,
        "scheme": sim.scheme, "policy": policy.to_dict(), "header": _header(spec, cfg),
    })
    _write_json(out / "summary.json", summary)
    _write_json(out / "manifest.json", cfg.resolved())
    return 0


def cmd_sweep(args, cfg: RunConfig) -> int:
    spec = cfg.game_spec()
    out = _output_dir(args, cfg)
    axis = args.axis or cfg.sweep.axis
    if axis not in ("h", "b"):
        raise ConfigError("sweep: --axis must be 'h' or 'b'")
    s = cfg.require_sensing()
    kw = dict(seeds=cfg.sweep.seeds, T=cfg.sim.T, base_seed=cfg.sim.seed, scheme=cfg.sim.scheme,
              eps=cfg.mdp.bisection_tol, redraw=Redraw(cfg.sim.redraw))
    same_axis = cfg.sweep.axis == axis and cfg.sweep.values
    if axis == "h":
        values = cfg.sweep.values if same_axis else list(FIG1_H)
        res = sweep_h(spec, s.b, values, **kw)
    else:
        values = cfg.sweep.values if same_axis else list(FIG2_B)
        res = sweep_budget(spec, s.h, values, **kw)
    with open(out / f"sweep_{axis}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["axis_value", "mean_cost", "stderr", "n_seeds", "J_star"])
        for row in res.rows():
            w.writerow([_num(row["axis_value"]), _num(row["mean_cost"]), _num(row["stderr"]),
                        row["n_seeds"], _num(row["J_star"])])
    manifest = json.loads(res.manifest)
    manifest["solver"] = cfg.solver.model_dump()
    manifest["meta"] = {"predicted_cost": res.predicted_cost.tolist(), "policies": res.policies,
                        "header": _header(spec, cfg)}
    _write_json(out / f"sweep_{axis}_manifest.json", manifest)
    return 0


COMMANDS = {"solve": cmd_solve, "policy": cmd_policy, "simulate": cmd_simulate, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aoi-lq", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--output", help="output directory (created if missing)")
        sp.add_argument("--seed", type=int, help="override sim.seed")
        if name == "policy":
            sp.add_argument("--dump-age-costs", action="store_true", help="write age_costs.csv")
            sp.add_argument("--dump-vi", action="store_true", help="write vi.csv")
        if name == "sweep":
            sp.add_argument("--axis", choices=("h", "b"), required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be unsigned")
            cfg.sim.seed = args.seed
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except MATH_ERRORS as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 2
    except (AoiLqError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
