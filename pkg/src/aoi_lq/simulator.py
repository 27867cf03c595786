"""Closed-loop simulation of the intermittently sensed game.

Player 2 plays u2 = R2^-1 B2^T P x on the true state; player 1 plays
u1 = -R1^-1 B1^T P xhat where xhat runs the open-loop predictor
d xhat = (A_tilde xhat + B1 u1) dt between samples and is reset to x at
sampling instants on the h-grid.

Two one-step schemes on the dt-grid are available:

``exact``
    (default) draws each dt-step from the exact Gaussian transition of the
    linear SDE (block matrix exponential for the mean, noise Gramian for the
    covariance).  No time-step bias in the state statistics.
``euler_maruyama``
    the classical weak order-1 scheme.

Running costs are time averages of the trapezoid rule on the dt-grid,
accumulated with a streaming mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .discretization import noise_gramian
from .errors import ConfigMismatch, Diverged, NonPositiveStep
from .game import GameSolution, GameSpec
from .sensing import SensorPolicy, sensing_schedule

SCHEMES = ("exact", "euler_maruyama")
DEFAULT_GUARD = 1e6
_CHUNK = 8192


@dataclass(frozen=True)
class SimConfig:
    horizon_T: float
    dt: float
    h: float
    seed: int
    policy: SensorPolicy
    record_stride: int = 1
    scheme: str = "exact"
    divergence_guard: float = DEFAULT_GUARD

    def __post_init__(self):
        if self.dt <= 0 or self.h <= 0:
            raise NonPositiveStep("dt and h must be positive")
        if abs(self.steps_per_sample * self.dt - self.h) > 1e-9 * self.h:
            raise ValueError(f"h={self.h} is not an integer multiple of dt={self.dt}")
        if self.horizon_T < self.h:
            raise ValueError("horizon_T must be at least h")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.record_stride < 0:
            raise ValueError("record_stride must be >= 0 (0 disables trajectory recording)")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")

    @property
    def steps_per_sample(self) -> int:
        return max(1, int(round(self.h / self.dt)))

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon_T / self.dt))


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    x: np.ndarray
    x_hat: np.ndarray
    e: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    sensed: np.ndarray
    running_J: np.ndarray
    n_T: int
    J_empirical: float
    error_cost_empirical: float
    rate_empirical: float
    horizon_T: float
    seed: int
    sample_times: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def summary(self, J_star: float) -> dict:
        return {
            "J_empirical": self.J_empirical,
            "J_star": J_star,
            "gap": self.J_empirical - J_star,
            "error_cost_empirical": self.error_cost_empirical,
            "n_T": self.n_T,
            "rate_empirical": self.rate_empirical,
            "seed": self.seed,
        }


def empirical_cost_decomposition(rec: TrajectoryRecord, J_star: float):
    """Return ``(J_empirical - J_star, error_cost_empirical)``.

    The two agree in expectation: the excess over the security level is the
    time-averaged weighted estimation-error power.
    """
    return rec.J_empirical - J_star, rec.error_cost_empirical


def _sqrt_psd(M):
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    return V * np.sqrt(np.clip(w, 0.0, None))


class _Kernel:
    """Per-step linear maps shared by all seeds of a batch."""

    def __init__(self, spec: GameSpec, sol: GameSolution, dt: float, scheme: str):
        n = spec.n
        B1K1 = spec.B1 @ sol.K1
        self.scheme = scheme
        if scheme == "exact":
            F = np.zeros((2 * n, 2 * n))
            F[:n, :n] = sol.A_tilde
            F[:n, n:] = -B1K1
            F[n:, n:] = sol.A_tilde - B1K1
            E = linalg.expm(F * dt)
            self.Fxx, self.Fxh, self.Fhh = E[:n, :n], E[:n, n:], E[n:, n:]
            self.L = _sqrt_psd(noise_gramian(sol.A_tilde, spec.G, dt))
        else:
            I = np.eye(n)
            self.Fxx = I + sol.A_tilde * dt
            self.Fxh = -B1K1 * dt
            self.Fhh = I + (sol.A_tilde - B1K1) * dt
            self.L = spec.G * math.sqrt(dt)
        self.noise_dim = self.L.shape[1]
        # transposes for row-vector batches
        self.FxxT, self.FxhT, self.FhhT, self.LT = self.Fxx.T, self.Fxh.T, self.Fhh.T, self.L.T


def _quad(X, M):
    return np.einsum("...i,ij,...j->...", X, M, X)


class _CostForms:
    """Quadratic forms for the running cost and the weighted error power."""

    def __init__(self, spec: GameSpec, sol: GameSolution):
        self.Wx = spec.Q - sol.K2.T @ spec.R2 @ sol.K2
        self.Wh = sol.K1.T @ spec.R1 @ sol.K1
        self.M1 = sol.M1

    def __call__(self, x, xh):
        return _quad(x, self.Wx) + _quad(xh, self.Wh), _quad(x - xh, self.M1)


def simulate_batch(spec: GameSpec, sol: GameSolution, cfg: SimConfig, seeds):
    """Simulate one run per seed; runs are independent of batching.

    Each seed owns its RNG streams (``SeedSequence(seed)`` spawns one stream
    for noise and one for the sampling policy), so ``simulate_batch`` with
    seeds [s] reproduces the corresponding member of any larger batch.
    """
    seeds = [int(s) for s in seeds]
    policy = cfg.policy
    if abs(policy.h - cfg.h) > 1e-12 * cfg.h:
        raise ConfigMismatch(f"policy built for h={policy.h}, simulation uses h={cfg.h}")
    n = spec.n
    S = len(seeds)
    m = cfg.steps_per_sample
    N = cfg.n_steps
    dt = cfg.dt
    n_grid = (N + m - 1) // m
    ker = _Kernel(spec, sol, dt, cfg.scheme)
    costs = _CostForms(spec, sol)

    noise_rngs, flags = [], []
    for s in seeds:
        ss_noise, ss_policy = np.random.SeedSequence(s).spawn(2)
        noise_rngs.append(np.random.default_rng(ss_noise))
        flags.append(sensing_schedule(policy, n_grid, np.random.default_rng(ss_policy)))
    flags = np.array(flags).reshape(S, n_grid)
    # reset[k] : sample taken right after dt-step k-1, i.e. at time k*dt (k >= 1)
    reset = np.zeros((N + 1, S), dtype=bool)
    reset[0:N:m] = flags.T[: len(range(0, N, m))]
    reset_any = reset.any(axis=1)

    L0 = _sqrt_psd(spec.Sigma0)
    x = np.stack([rng.standard_normal(n) for rng in noise_rngs]) @ L0.T
    xh = x.copy()

    stride = cfg.record_stride
    recording = stride > 0
    rec_idx, rec_x, rec_xh, rec_J = [], [], [], []
    if recording:
        rec_idx.append(np.array([0]))
        rec_x.append(x[None].copy())
        rec_xh.append(xh[None].copy())
        rec_J.append(np.zeros((1, S)))

    J_mean = np.zeros(S)
    E_mean = np.zeros(S)
    c_left, ec_left = costs(x, xh)
    guard = cfg.divergence_guard

    k0 = 0
    while k0 < N:
        L = min(_CHUNK, N - k0)
        noise = np.stack([rng.standard_normal((L, ker.noise_dim)) for rng in noise_rngs],
                         axis=1) @ ker.LT
        X = np.empty((L, S, n))
        XH = np.empty((L, S, n))
        for j in range(L):
            x = x @ ker.FxxT + xh @ ker.FxhT + noise[j]
            xh = xh @ ker.FhhT
            X[j] = x
            XH[j] = xh
            if reset_any[k0 + j + 1]:
                r = reset[k0 + j + 1]
                xh[r] = x[r]
        mx = np.max(np.abs(X))
        if not np.isfinite(mx) or mx > guard:
            bad = int(np.argmax(np.any(~(np.abs(X) <= guard), axis=(1, 2))))
            raise Diverged(f"|x| exceeded {guard:g} at t={(k0 + bad + 1) * dt:g}")

        c_pre, ec_pre = costs(X, XH)  # end of each step, before any reset
        XH_post = XH.copy()
        rs = reset[k0 + 1:k0 + L + 1]
        XH_post[rs] = X[rs]
        c_post, ec_post = costs(X, XH_post)
        cl = np.concatenate([c_left[None], c_post[:-1]])
        el = np.concatenate([ec_left[None], ec_post[:-1]])
        inc_c = 0.5 * (cl + c_pre)
        inc_e = 0.5 * (el + ec_pre)
        c_left, ec_left = c_post[-1], ec_post[-1]

        # streaming mean, merged chunk by chunk
        done = k0 + L
        if recording:
            cnt = np.arange(k0 + 1, done + 1)[:, None]
            running = (J_mean * k0 + np.cumsum(inc_c, axis=0)) / cnt
        # contiguous per-seed rows keep the summation order independent of batch size
        J_mean = J_mean + (np.ascontiguousarray(inc_c.T).sum(axis=1) - L * J_mean) / done
        E_mean = E_mean + (np.ascontiguousarray(inc_e.T).sum(axis=1) - L * E_mean) / done

        if recording:
            ks = np.arange(k0 + 1, done + 1)
            keep = ((ks % stride == 0) | rs.any(axis=1)) & (ks < N)
            rec_idx.append(ks[keep])
            rec_x.append(X[keep])
            rec_xh.append(XH_post[keep])
            rec_J.append(running[keep])
        k0 = done

    T = N * dt
    out = []
    if recording:
        idx = np.concatenate(rec_idx)
        RX = np.concatenate(rec_x)
        RXH = np.concatenate(rec_xh)
        RJ = np.concatenate(rec_J)
    for i, s in enumerate(seeds):
        n_T = int(flags[i].sum())
        sample_times = np.flatnonzero(flags[i]) * m * dt
        if recording:
            times = idx * dt
            X_i, XH_i = RX[:, i, :], RXH[:, i, :]
            sensed = reset[idx, i]
            runJ = RJ[:, i]
        else:
            times = np.zeros(0)
            X_i = XH_i = np.zeros((0, n))
            sensed = np.zeros(0, dtype=bool)
            runJ = np.zeros(0)
        out.append(TrajectoryRecord(
            times=times, x=X_i, x_hat=XH_i, e=X_i - XH_i,
            u1=-XH_i @ sol.K1.T, u2=X_i @ sol.K2.T, sensed=sensed, running_J=runJ,
            n_T=n_T, J_empirical=float(J_mean[i]), error_cost_empirical=float(E_mean[i]),
            rate_empirical=n_T / T, horizon_T=T, seed=s, sample_times=sample_times,
        ))
    return out


def simulate(spec: GameSpec, sol: GameSolution, cfg: SimConfig) -> TrajectoryRecord:
    """Simulate a single closed-loop run with ``cfg.seed``."""
    return simulate_batch(spec, sol, cfg, [cfg.seed])[0]
