"""Scalar controllability metrics of a Gramian.

Every metric is maximize-direction (the inverse-trace family is stored
negated). Rank-deficient input maps to ``-inf`` for the strict metrics and
to subspace surrogates (pseudoinverse trace, log product of nonzero
eigenvalues) otherwise. All evaluations share one symmetric
eigendecomposition per matrix and a common numerical-rank policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PsdViolationError, ValidationError
from .gramian import PSD_BAND, Gramian, symmetrize

NEG_INF = float("-inf")

VARIANTS = (
    "trace",
    "trace_inverse",
    "trace_pinv",
    "log_det",
    "log_prod_nonzero",
    "rank",
    "lambda_min",
    "nth_root_log_det",
    "weighted_log_det",
)

# metrics that return -inf on rank-deficient input
STRICT_VARIANTS = frozenset(
    {"trace_inverse", "log_det", "nth_root_log_det", "weighted_log_det"}
)

# lambda_min is the one non-submodular metric (shown by counterexample)
SUBMODULAR_VARIANTS = frozenset(VARIANTS) - {"lambda_min"}

CLI_NAMES = {
    "trace": "trace",
    "trace-inv": "trace_inverse",
    "trace-pinv": "trace_pinv",
    "logdet": "log_det",
    "logprod": "log_prod_nonzero",
    "rank": "rank",
    "lambda-min": "lambda_min",
    "nthroot-logdet": "nth_root_log_det",
    "weighted-logdet": "weighted_log_det",
}


@dataclass(frozen=True)
class RankPolicy:
    """Numerical-rank thresholding: count eigenvalues above
    ``max(rel_tol * lambda_max, abs_floor)``."""

    rel_tol: float = 1e-10
    abs_floor: float = 1e-14

    def __post_init__(self):
        if not (0 < self.rel_tol < 1):
            raise ValidationError("rel_tol must lie in (0, 1)")
        if self.abs_floor <= 0:
            raise ValidationError("abs_floor must be positive")


DEFAULT_POLICY = RankPolicy()


@dataclass(frozen=True)
class MetricKind:
    """A metric variant, optionally carrying the weight matrix Q for
    weighted_log_det (Q must have full row rank m <= n)."""

    name: str
    weight: np.ndarray | None = None

    def __post_init__(self):
        if self.name not in VARIANTS:
            raise ValidationError(f"unknown metric {self.name!r}; expected one of {VARIANTS}")
        if self.name == "weighted_log_det":
            if self.weight is None:
                raise ValidationError("weighted_log_det needs a weight matrix")
            Q = np.atleast_2d(np.asarray(self.weight, dtype=float))
            m, n = Q.shape
            if m > n:
                raise ValidationError(f"weight matrix must be wide: {m} x {n}")
            if np.linalg.matrix_rank(Q) < m:
                raise ValidationError("weight matrix must have full row rank")
            object.__setattr__(self, "weight", Q)
        elif self.weight is not None:
            raise ValidationError(f"metric {self.name} takes no weight matrix")

    @property
    def is_strict(self) -> bool:
        return self.name in STRICT_VARIANTS

    @property
    def is_submodular(self) -> bool:
        return self.name in SUBMODULAR_VARIANTS


TRACE = MetricKind("trace")
TRACE_INVERSE = MetricKind("trace_inverse")
TRACE_PINV = MetricKind("trace_pinv")
LOG_DET = MetricKind("log_det")
LOG_PROD_NONZERO = MetricKind("log_prod_nonzero")
RANK = MetricKind("rank")
LAMBDA_MIN = MetricKind("lambda_min")
NTH_ROOT_LOG_DET = MetricKind("nth_root_log_det")


def weighted_log_det(Q: np.ndarray) -> MetricKind:
    return MetricKind("weighted_log_det", weight=Q)


def metric_from_name(cli_name: str, weight: np.ndarray | None = None) -> MetricKind:
    if cli_name not in CLI_NAMES:
        raise ValidationError(f"unknown metric name {cli_name!r}; expected one of {sorted(CLI_NAMES)}")
    name = CLI_NAMES[cli_name]
    if name == "weighted_log_det":
        return weighted_log_det(weight)
    return MetricKind(name)


def secondary_for(kind: MetricKind) -> MetricKind:
    """Rank-stage preference score: pseudoinverse trace for the inverse-trace
    target, log product of nonzero eigenvalues for the log-det family."""
    if kind.name == "trace_inverse":
        return TRACE_PINV
    if kind.name in ("log_det", "nth_root_log_det", "weighted_log_det"):
        return LOG_PROD_NONZERO
    raise ValidationError(f"no rank-stage secondary score for metric {kind.name}")


def checked_eigenvalues(W_batch: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of each symmetrized matrix, with eigenvalues in
    the PSD clipping band set to 0 and anything below it rejected."""
    lam = np.linalg.eigvalsh(symmetrize(W_batch))
    lam_max = np.maximum(lam[..., -1], 0.0)
    band = PSD_BAND * np.maximum(1.0, lam_max)
    if np.any(lam[..., 0] < -band):
        worst = float(np.min(lam[..., 0]))
        raise PsdViolationError(f"eigenvalue {worst:.3e} below PSD clipping band")
    return np.clip(lam, 0.0, None)


def numerical_rank(lam: np.ndarray, policy: RankPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Counts of eigenvalues above the policy threshold; lam ascending,
    shape (..., n)."""
    tau = np.maximum(policy.rel_tol * np.maximum(lam[..., -1], 0.0), policy.abs_floor)
    return np.count_nonzero(lam > tau[..., None], axis=-1)


def _eval_from_eigenvalues(name: str, lam: np.ndarray, policy: RankPolicy, n_full: int) -> np.ndarray:
    """Metric values from an eigenvalue batch of shape (B, d)."""
    B, d = lam.shape
    tau = np.maximum(policy.rel_tol * np.maximum(lam[:, -1], 0.0), policy.abs_floor)
    above = lam > tau[:, None]
    ranks = above.sum(axis=1)
    full = ranks == d

    if name == "trace":
        return lam.sum(axis=1)
    if name == "rank":
        return ranks.astype(float)
    if name == "lambda_min":
        return lam[:, 0]

    out = np.full(B, NEG_INF)
    if name in ("trace_inverse", "trace_pinv"):
        with np.errstate(divide="ignore"):
            inv = np.where(above, 1.0 / np.where(above, lam, 1.0), 0.0)
        pinv_vals = -inv.sum(axis=1)
        if name == "trace_pinv":
            return pinv_vals
        out[full] = pinv_vals[full]
        return out
    if name in ("log_det", "nth_root_log_det", "weighted_log_det"):
        if full.any():
            out[full] = np.log(lam[full]).sum(axis=1)
        if name == "nth_root_log_det":
            out[full] /= n_full
        return out
    if name == "log_prod_nonzero":
        logs = np.where(above, np.log(np.where(above, lam, 1.0)), 0.0)
        return logs.sum(axis=1)
    raise ValidationError(f"unknown metric {name!r}")


def eval_metric_batch(
    kind: MetricKind, W_batch: np.ndarray, policy: RankPolicy = DEFAULT_POLICY
) -> np.ndarray:
    """Evaluate one metric over a (B, n, n) stack; returns (B,) floats with
    -inf marking rank-deficient input under a strict metric."""
    W_batch = np.asarray(W_batch, dtype=float)
    single = W_batch.ndim == 2
    if single:
        W_batch = W_batch[None]
    n = W_batch.shape[-1]
    if kind.name == "weighted_log_det":
        Q = kind.weight
        if Q.shape[1] != n:
            raise ValidationError(f"weight matrix columns {Q.shape[1]} != n={n}")
        projected = np.einsum("ij,bjk,lk->bil", Q, W_batch, Q)
        lam = checked_eigenvalues(projected)
        vals = _eval_from_eigenvalues(kind.name, lam, policy, n_full=n)
    else:
        lam = checked_eigenvalues(W_batch)
        vals = _eval_from_eigenvalues(kind.name, lam, policy, n_full=n)
    return vals[0] if single else vals


def eval_metric(kind: MetricKind, W, policy: RankPolicy = DEFAULT_POLICY) -> float:
    """Scalar metric value; W may be a Gramian or a raw symmetric matrix."""
    M = W.matrix if isinstance(W, Gramian) else np.asarray(W, dtype=float)
    return float(eval_metric_batch(kind, M, policy))


def marginal_gain(before: float, after: float) -> float:
    """Gain with the uncontrollable sentinel rules: -inf to -inf counts as 0,
    -inf to finite dominates every finite gain."""
    if before == NEG_INF:
        return 0.0 if after == NEG_INF else math.inf
    return after - before


def h2_norm_sq(W, C: np.ndarray) -> float:
    """Squared output-weighted gain trace(C W C')."""
    M = W.matrix if isinstance(W, Gramian) else np.asarray(W, dtype=float)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.shape[1] != M.shape[0]:
        raise ValidationError(f"C columns {C.shape[1]} != n={M.shape[0]}")
    return float(np.trace(C @ M @ C.T))


def ellipsoid_volume(W, mode: str = "sqrt", policy: RankPolicy = DEFAULT_POLICY) -> float:
    """Volume of the unit-energy reachability ellipsoid.

    ``mode="sqrt"`` uses the standard ellipsoid volume with sqrt(det W);
    ``mode="nth_root"`` uses (det W)^(1/n) instead. Returns 0 for
    rank-deficient W.
    """
    M = W.matrix if isinstance(W, Gramian) else np.asarray(W, dtype=float)
    n = M.shape[0]
    lam = checked_eigenvalues(M[None])[0]
    if int(numerical_rank(lam[None], policy)[0]) < n:
        return 0.0
    log_det = float(np.log(lam).sum())
    coeff = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    if mode == "sqrt":
        return coeff * math.exp(log_det / 2)
    if mode == "nth_root":
        return coeff * math.exp(log_det / n)
    raise ValidationError(f"unknown volume mode {mode!r}; expected 'sqrt' or 'nth_root'")
