"""Full-information LQ zero-sum game: GARE solution and saddle-point data.

The minimizer (player 1) and maximizer (player 2) share the dynamics

    dx = (A x + B1 u1 + B2 u2) dt + G dW

and the running cost |x|_Q^2 + |u1|_R1^2 - |u2|_R2^2.  Everything the
sensing-limited player needs downstream (the closed-loop drift seen once
player 2 commits to its security strategy, the error weight M1, ...) is
collected in :class:`GameSolution`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DimensionMismatch, InvalidSpec, NonFinite, NoStabilizingSolution

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 50


def _as_matrix(name, value):
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite(f"{name} contains non-finite entries")
    return arr


def _is_symmetric(M, rtol=1e-10):
    return np.allclose(M, M.T, rtol=0.0, atol=rtol * (1.0 + np.abs(M).max(initial=0.0)))


def _min_eig(M):
    return float(np.linalg.eigvalsh(0.5 * (M + M.T)).min(initial=np.inf))


def _psd_slack(M):
    return -1e-8 * (1.0 + np.linalg.norm(M, 2))


@dataclass(frozen=True)
class GameSpec:
    """Continuous-time game parameters.

    ``G`` defaults to the identity and ``Sigma0`` to zero when omitted.
    """

    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    Q: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    G: np.ndarray | None = None
    Sigma0: np.ndarray | None = None

    def __post_init__(self):
        A = _as_matrix("A", self.A)
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        B1 = _as_matrix("B1", self.B1)
        B2 = _as_matrix("B2", self.B2)
        G = np.eye(n) if self.G is None else _as_matrix("G", self.G)
        Sigma0 = np.zeros((n, n)) if self.Sigma0 is None else _as_matrix("Sigma0", self.Sigma0)
        Q = _as_matrix("Q", self.Q)
        R1 = _as_matrix("R1", self.R1)
        R2 = _as_matrix("R2", self.R2)

        for name, M in (("B1", B1), ("B2", B2), ("G", G)):
            if M.shape[0] != n:
                raise DimensionMismatch(f"{name} must have {n} rows, got {M.shape}")
        for name, M, k in (("Q", Q, n), ("Sigma0", Sigma0, n),
                           ("R1", R1, B1.shape[1]), ("R2", R2, B2.shape[1])):
            if M.shape != (k, k):
                raise DimensionMismatch(f"{name} must be {k}x{k}, got {M.shape}")

        for name, M in (("Q", Q), ("R1", R1), ("R2", R2), ("Sigma0", Sigma0)):
            if not _is_symmetric(M):
                raise InvalidSpec(f"{name} must be symmetric")
        for name, M in (("R1", R1), ("R2", R2)):
            if _min_eig(M) <= 0.0:
                raise InvalidSpec(f"{name} must be positive definite")
        for name, M in (("Q", Q), ("Sigma0", Sigma0)):
            if _min_eig(M) < _psd_slack(M):
                raise InvalidSpec(f"{name} must be positive semidefinite")

        for name, M in (("A", A), ("B1", B1), ("B2", B2), ("G", G), ("Q", Q),
                        ("R1", R1), ("R2", R2), ("Sigma0", Sigma0)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m1(self) -> int:
        return self.B1.shape[1]

    @property
    def m2(self) -> int:
        return self.B2.shape[1]

    @property
    def S1(self):
        """B1 R1^-1 B1^T."""
        return self.B1 @ np.linalg.solve(self.R1, self.B1.T)

    @property
    def S2(self):
        """B2 R2^-1 B2^T."""
        return self.B2 @ np.linalg.solve(self.R2, self.B2.T)


@dataclass(frozen=True)
class GameSolution:
    P: np.ndarray
    K1: np.ndarray
    K2: np.ndarray
    A_tilde: np.ndarray
    Q_tilde: np.ndarray
    M1: np.ndarray
    M2: np.ndarray
    J_star: float
    residual_norm: float
    A_closed: np.ndarray  # full-information closed loop A - B1 K1 + B2 K2
    stabilizing: bool = True
    psd: bool = True
    newton_iterations: int = 0
    notes: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "P": self.P.tolist(),
            "K1": self.K1.tolist(),
            "K2": self.K2.tolist(),
            "A_tilde": self.A_tilde.tolist(),
            "Q_tilde": self.Q_tilde.tolist(),
            "M1": self.M1.tolist(),
            "M2": self.M2.tolist(),
            "J_star": self.J_star,
            "residual_norm": self.residual_norm,
            "stabilizing": bool(self.stabilizing),
            "psd": bool(self.psd),
            "newton_iterations": int(self.newton_iterations),
            "notes": list(self.notes),
        }


def gare_residual(spec: GameSpec, P) -> np.ndarray:
    """A^T P + P A + Q + P (B2 R2^-1 B2^T - B1 R1^-1 B1^T) P."""
    return spec.A.T @ P + P @ spec.A + spec.Q + P @ (spec.S2 - spec.S1) @ P


def security_level(P, G) -> float:
    """Expected cost tr(P G G^T) of the saddle-point pair."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    G = np.atleast_2d(np.asarray(G, dtype=float))
    if P.shape[0] != P.shape[1] or G.shape[0] != P.shape[0]:
        raise DimensionMismatch(f"incompatible shapes P{P.shape}, G{G.shape}")
    return float(np.trace(P @ G @ G.T))


def _hamiltonian_solution(A, S, Q):
    """Stabilizing solution from the ordered real Schur form, or None."""
    n = A.shape[0]
    H = np.block([[A, -S], [-Q, -A.T]])
    try:
        T, Z, sdim = linalg.schur(H, output="real", sort="lhp")
    except linalg.LinAlgError:
        # reordering failed; fall back to eigenvectors of the stable eigenvalues
        w, V = linalg.eig(H)
        stable = w.real < 0.0
        if stable.sum() != n:
            return None
        Z, sdim = V[:, stable], n
    if sdim != n:
        return None
    U11, U21 = Z[:n, :n], Z[n:, :n]
    if np.linalg.cond(U11) > 1e12:
        return None
    P = np.real(np.linalg.solve(U11.T, U21.T).T)
    return 0.5 * (P + P.T)


def _newton_refine(A, S, Q, P, tol, max_iter):
    """Newton iterations on R(P) = A^T P + P A + Q - P S P."""
    def resid(X):
        return A.T @ X + X @ A + Q - X @ S @ X

    best, best_norm = P, np.linalg.norm(resid(P))
    it = 0
    while best_norm > tol and it < max_iter:
        it += 1
        Acl = A - S @ best
        rhs = -(Q + best @ S @ best)
        try:
            X = linalg.solve_continuous_lyapunov(Acl.T, rhs)
        except (linalg.LinAlgError, ValueError):
            break
        X = 0.5 * (X + X.T)
        r = np.linalg.norm(resid(X))
        if not np.isfinite(r) or r >= best_norm:
            break
        best, best_norm = X, r
    return best, float(best_norm), it


def solve_game_riccati(spec: GameSpec, tol: float = DEFAULT_TOL,
                       max_iter: int = DEFAULT_MAX_ITER) -> GameSolution:
    """Solve the game Riccati equation and derive the saddle-point quantities.

    The stabilizing solution is taken from the stable invariant subspace of
    the Hamiltonian ``[[A, -S], [-Q, -A^T]]`` with ``S = S1 - S2`` and then
    polished by Newton steps.  If the Hamiltonian has eigenvalues on the
    imaginary axis and ``Q = 0``, the zero matrix (the minimal PSD solution)
    is returned with ``stabilizing=False``.
    """
    A, Q = spec.A, spec.Q
    S = spec.S1 - spec.S2
    n = spec.n
    notes = []

    P0 = _hamiltonian_solution(A, S, Q)
    if P0 is None:
        if np.linalg.norm(Q) <= tol:
            P0 = np.zeros((n, n))
            notes.append("Hamiltonian has imaginary-axis eigenvalues; returning zero solution")
            log.warning(notes[-1])
        else:
            raise NoStabilizingSolution(
                "Hamiltonian stable subspace extraction failed (ill-posed game?)")

    P, res, iters = _newton_refine(A, S, Q, P0, tol, max_iter)
    P = 0.5 * (P + P.T)
    res = float(np.linalg.norm(gare_residual(spec, P)))
    if res > tol:
        raise NoStabilizingSolution(f"GARE residual {res:.3e} exceeds tolerance {tol:.1e}")

    psd = _min_eig(P) >= _psd_slack(P)
    if not psd:
        raise NoStabilizingSolution("Riccati solution is not positive semidefinite")

    Acl = A - S @ P
    stabilizing = bool(np.all(np.linalg.eigvals(Acl).real < 0.0))
    if not stabilizing and not notes:
        raise NoStabilizingSolution("closed loop A - B1 K1 + B2 K2 is not Hurwitz")

    return _derive(spec, P, res, stabilizing, psd, iters, tuple(notes))


def _derive(spec, P, res, stabilizing, psd, iters, notes):
    K1 = np.linalg.solve(spec.R1, spec.B1.T @ P)
    K2 = np.linalg.solve(spec.R2, spec.B2.T @ P)
    M1 = P @ spec.S1 @ P
    M2 = P @ spec.S2 @ P
    A_tilde = spec.A + spec.S2 @ P
    Q_tilde = spec.Q - M2
    M1, M2, Q_tilde = (0.5 * (M + M.T) for M in (M1, M2, Q_tilde))
    if _min_eig(Q_tilde) < _psd_slack(Q_tilde):
        msg = "Q_tilde = Q - P B2 R2^-1 B2^T P is indefinite"
        log.warning(msg)
        notes = notes + (msg,)
    return GameSolution(
        P=P, K1=K1, K2=K2, A_tilde=A_tilde, Q_tilde=Q_tilde, M1=M1, M2=M2,
        J_star=security_level(P, spec.G), residual_norm=res,
        A_closed=A_tilde - spec.B1 @ K1, stabilizing=stabilizing, psd=psd, newton_iterations=iters, notes=notes,
    )


def transformed_are_residual(sol: GameSolution, spec: GameSpec) -> float:
    """Norm of A~^T P + P A~ + Q~ - P B1 R1^-1 B1^T P.

    Zero whenever P solves the game Riccati equation; checked as a
    consistency identity rather than assumed.
    """
    P = sol.P
    if P.shape != spec.A.shape:
        raise DimensionMismatch("solution and spec have different state dimension")
    R = sol.A_tilde.T @ P + P @ sol.A_tilde + sol.Q_tilde - P @ spec.S1 @ P
    return float(np.linalg.norm(R))
