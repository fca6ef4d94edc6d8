"""Controllability Gramians, per-candidate caches, and minimum-energy inputs.

Infinite-horizon Gramians come from the continuous Lyapunov equation
``A W + W A' + M = 0`` (Schur / Bartels-Stewart via scipy) and are accepted
only if the residual meets the contract below. Finite-horizon Gramians use
the augmented-block matrix exponential, split over dyadic subintervals so
the block exponential stays well scaled at long horizons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import (
    ConvergenceError,
    InstabilityError,
    LyapunovResidualError,
    PsdViolationError,
    UncontrollableError,
    ValidationError,
)
from .lti import STABILITY_TOL, LtiSystem, spectral_abscissa

INFINITE = math.inf

# ||A W + W A' + M||_F <= LYAP_RTOL * max(1, ||M||_F)
LYAP_RTOL = 1e-8

# PSD acceptance band: lambda_min >= -PSD_BAND * max(1, lambda_max)
PSD_BAND = 1e-10


def symmetrize(W: np.ndarray) -> np.ndarray:
    return (W + W.swapaxes(-1, -2)) / 2.0


@dataclass(frozen=True)
class Gramian:
    """Symmetric PSD reachability matrix, tagged with its horizon.

    ``horizon`` is ``math.inf`` for the steady-state Gramian or the finite
    time t. The stored matrix is exactly symmetric; construction rejects
    eigenvalues below ``-1e-10 * max(1, lambda_max)``.
    """

    matrix: np.ndarray
    horizon: float = INFINITE

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValidationError(f"Gramian must be square, got shape {M.shape}")
        M = symmetrize(M)
        object.__setattr__(self, "matrix", M)
        lam = np.linalg.eigvalsh(M)
        lam_max = max(float(lam[-1]), 0.0)
        if float(lam[0]) < -PSD_BAND * max(1.0, lam_max):
            raise PsdViolationError(
                f"minimum eigenvalue {lam[0]:.3e} below PSD band for scale {lam_max:.3e}"
            )

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def solve_lyapunov(A: np.ndarray, M: np.ndarray) -> Gramian:
    """Unique PSD solution W of ``A W + W A' + M = 0`` for stable A.

    M must be symmetric PSD (within 1e-12 relative). The result satisfies
    ``||A W + W A' + M||_F <= 1e-8 * max(1, ||M||_F)`` or the solve is
    rejected with the achieved residual.
    """
    A = np.asarray(A, dtype=float)
    M = np.asarray(M, dtype=float)
    abscissa = spectral_abscissa(A)
    if abscissa >= STABILITY_TOL:
        raise InstabilityError(abscissa)
    m_norm = np.linalg.norm(M, "fro")
    if np.linalg.norm(M - M.T, "fro") > 1e-12 * max(1.0, m_norm):
        raise ValidationError("Lyapunov right-hand side must be symmetric")
    W = scipy.linalg.solve_continuous_lyapunov(A, -M)
    W = symmetrize(W)
    residual = np.linalg.norm(A @ W + W @ A.T + M, "fro")
    bound = LYAP_RTOL * max(1.0, m_norm)
    if residual > bound:
        raise LyapunovResidualError(residual, bound)
    return Gramian(W, horizon=INFINITE)


def observability_gramian(A: np.ndarray, C: np.ndarray) -> Gramian:
    """Dual of the controllability Gramian: solve against (A', C'C)."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    return solve_lyapunov(np.asarray(A, dtype=float).T, C.T @ C)


@dataclass(frozen=True)
class GramianCache:
    """Per-candidate infinite-horizon Gramians plus the base-input Gramian.

    Single-column Gramians add, so the Gramian of any candidate subset is
    ``base + sum of per-candidate terms`` with no further Lyapunov solves.
    """

    system: LtiSystem
    base: Gramian
    per_candidate: dict[str, Gramian]
    ids: tuple[str, ...] = field(init=False)
    stack: np.ndarray = field(init=False)  # (M, n, n) candidate matrices in pool order

    def __post_init__(self):
        ids = tuple(self.system.candidate_ids)
        missing = set(ids) - set(self.per_candidate)
        extra = set(self.per_candidate) - set(ids)
        if missing or extra:
            raise ValidationError(f"cache ids mismatch: missing={missing} extra={extra}")
        n = self.system.n
        stack = (
            np.stack([self.per_candidate[c].matrix for c in ids])
            if ids
            else np.zeros((0, n, n))
        )
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "stack", stack)

    @property
    def n(self) -> int:
        return self.system.n

    def sum_matrix(self, indices) -> np.ndarray:
        """base + sum of candidate Gramians by pool index; raw fast path."""
        W = self.base.matrix.copy()
        for i in indices:
            W += self.stack[i]
        return W

    def indices_of(self, S) -> list[int]:
        pos = {c: i for i, c in enumerate(self.ids)}
        try:
            return sorted(pos[s] for s in set(S))
        except KeyError as e:
            raise ValidationError(f"unknown candidate id {e.args[0]!r}") from None


def build_cache(sys: LtiSystem) -> GramianCache:
    """Solve one Lyapunov equation per candidate plus one for the base block."""
    n = sys.n
    if sys.base_columns.shape[1]:
        base = solve_lyapunov(sys.A, sys.base_columns @ sys.base_columns.T)
    else:
        base = Gramian(np.zeros((n, n)), horizon=INFINITE)
    per: dict[str, Gramian] = {}
    for cand in sys.candidates:
        try:
            per[cand.id] = solve_lyapunov(sys.A, np.outer(cand.column, cand.column))
        except Exception as e:
            raise type(e)(f"candidate {cand.id!r}: {e}") from e
    return GramianCache(system=sys, base=base, per_candidate=per)


def gramian_of(cache: GramianCache, S) -> Gramian:
    """Gramian of the base inputs plus the candidate subset S (ids)."""
    return Gramian(cache.sum_matrix(cache.indices_of(S)), horizon=INFINITE)


def finite_horizon_gramian(A: np.ndarray, B: np.ndarray, t: float) -> Gramian:
    """Reachability Gramian over [0, t]; A need not be stable.

    Computed by exponentiating the 2n x 2n block matrix [[-A, BB'], [0, A']]
    over a base interval t0 = t / 2^j and doubling with the exact identity
    W(2s) = W(s) + e^{As} W(s) e^{A's}, which keeps all intermediates
    bounded regardless of the horizon.
    """
    A = np.asarray(A, dtype=float)
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[0] != A.shape[0]:
        B = B.T
    if B.shape[0] != A.shape[0]:
        raise ValidationError(f"B rows {B.shape} incompatible with A {A.shape}")
    if t <= 0:
        raise ValidationError("horizon t must be positive")
    n = A.shape[0]
    Q = B @ B.T
    scale = max(np.linalg.norm(A, "fro"), np.linalg.norm(Q, "fro"))
    j = 0
    if t * scale > 1.0:
        j = int(np.ceil(np.log2(t * scale)))
    t0 = t / (2**j)
    blk = np.block([[-A, Q], [np.zeros((n, n)), A.T]])
    F = scipy.linalg.expm(blk * t0)
    Phi = F[n:, n:].T  # e^{A t0}
    W = Phi @ F[:n, n:]
    for _ in range(j):
        W = W + Phi @ W @ Phi.T
        Phi = Phi @ Phi
    return Gramian(symmetrize(W), horizon=t)


@dataclass(frozen=True)
class EnergyControl:
    """Minimum-energy open-loop input reaching x_f at time t from the origin.

    ``input_evaluator(tau)`` returns u*(tau) for tau in [0, t]; ``energy``
    equals x_f' W(t)^{-1} x_f.
    """

    t: float
    x_f: np.ndarray
    energy: float
    input_evaluator: Callable[[float], np.ndarray]


def min_energy_input(
    A: np.ndarray,
    B: np.ndarray,
    t: float,
    x_f: np.ndarray,
    rank_rel_tol: float = 1e-10,
) -> EnergyControl:
    """Least-energy u(.) with x(0) = 0 and x(t) = x_f.

    Requires the horizon-t Gramian to have full numerical rank; otherwise
    the target may be unreachable and the numerical rank is reported.
    """
    A = np.asarray(A, dtype=float)
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[0] != A.shape[0]:
        B = B.T
    x_f = np.asarray(x_f, dtype=float).reshape(-1)
    n = A.shape[0]
    if x_f.shape != (n,):
        raise ValidationError(f"x_f length {x_f.shape[0]} != n={n}")
    W = finite_horizon_gramian(A, B, t).matrix
    lam = np.linalg.eigvalsh(W)
    lam_max = max(float(lam[-1]), 0.0)
    tau = max(rank_rel_tol * lam_max, 1e-14)
    rank = int(np.count_nonzero(lam > tau))
    if rank < n:
        raise UncontrollableError(rank, n, f"Gramian at horizon t={t} has numerical rank {rank} < {n}")
    eta = np.linalg.solve(W, x_f)
    energy = float(x_f @ eta)
    At = A.T

    def u_star(s: float) -> np.ndarray:
        return B.T @ scipy.linalg.expm(At * (t - s)) @ eta

    return EnergyControl(t=t, x_f=x_f, energy=energy, input_evaluator=u_star)


def simulate_endpoint(
    A: np.ndarray,
    B: np.ndarray,
    u: Callable[[float], np.ndarray],
    t: float,
    steps: int = 2000,
    refine_tol: float = 1e-9,
    max_doublings: int = 8,
) -> np.ndarray:
    """x(t) of xdot = A x + B u(tau) from x(0) = 0, classical RK4.

    Step count doubles until the endpoint moves by less than ``refine_tol``.
    Verification-path integrator: simple over fast.
    """
    A = np.asarray(A, dtype=float)
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[0] != A.shape[0]:
        B = B.T

    def run(N: int) -> np.ndarray:
        h = t / N
        x = np.zeros(A.shape[0])
        for i in range(N):
            s = i * h
            k1 = A @ x + B @ u(s)
            k2 = A @ (x + h / 2 * k1) + B @ u(s + h / 2)
            k3 = A @ (x + h / 2 * k2) + B @ u(s + h / 2)
            k4 = A @ (x + h * k3) + B @ u(s + h)
            x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        return x

    x_prev = run(steps)
    for _ in range(max_doublings):
        steps *= 2
        x_next = run(steps)
        if np.linalg.norm(x_next - x_prev) < refine_tol:
            return x_next
        x_prev = x_next
    raise ConvergenceError(f"endpoint did not settle below {refine_tol} after {max_doublings} doublings")
