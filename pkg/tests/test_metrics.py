import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import gramsel as gs
from gramsel.errors import PsdViolationError, ValidationError
from gramsel.metrics import (
    CLI_NAMES,
    NEG_INF,
    RankPolicy,
    eval_metric_batch,
    marginal_gain,
)

ALL_KINDS = [
    gs.TRACE,
    gs.TRACE_INVERSE,
    gs.TRACE_PINV,
    gs.LOG_DET,
    gs.LOG_PROD_NONZERO,
    gs.RANK,
    gs.LAMBDA_MIN,
    gs.NTH_ROOT_LOG_DET,
]


def random_psd(rng, n, ranks=None, lo=1e-3, hi=1.0):
    """PSD matrix with eigenvalues either exactly 0 or well above the rank
    threshold, so numerical rank is unambiguous."""
    r = n if ranks is None else ranks
    lam = np.zeros(n)
    lam[:r] = rng.uniform(lo, hi, size=r)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (Q * lam) @ Q.T


def test_half_identity_closed_forms():
    W = 0.5 * np.eye(2)
    assert gs.eval_metric(gs.TRACE, W) == pytest.approx(1.0)
    assert gs.eval_metric(gs.TRACE_INVERSE, W) == pytest.approx(-4.0)
    assert gs.eval_metric(gs.LOG_DET, W) == pytest.approx(-1.386294, abs=1e-6)
    assert gs.eval_metric(gs.RANK, W) == 2
    assert gs.eval_metric(gs.LAMBDA_MIN, W) == pytest.approx(0.5)
    assert gs.eval_metric(gs.NTH_ROOT_LOG_DET, W) == pytest.approx(-0.693147, abs=1e-6)


def test_rank_deficient_sentinels():
    W = np.diag([1.0, 0.0])
    assert gs.eval_metric(gs.LOG_DET, W) == NEG_INF
    assert gs.eval_metric(gs.TRACE_INVERSE, W) == NEG_INF
    assert gs.eval_metric(gs.NTH_ROOT_LOG_DET, W) == NEG_INF
    assert gs.eval_metric(gs.LOG_PROD_NONZERO, W) == pytest.approx(0.0)
    assert gs.eval_metric(gs.TRACE_PINV, W) == pytest.approx(-1.0)
    assert gs.eval_metric(gs.RANK, W) == 1
    assert gs.eval_metric(gs.LAMBDA_MIN, W) == 0.0
    assert gs.eval_metric(gs.LOG_PROD_NONZERO, np.zeros((2, 2))) == pytest.approx(0.0)


def test_weighted_log_det():
    kind = gs.weighted_log_det(np.array([[1.0, 0.0]]))
    assert gs.eval_metric(kind, np.diag([2.0, 3.0])) == pytest.approx(math.log(2.0))
    # projection of a deficient Gramian can still be full rank
    assert gs.eval_metric(kind, np.diag([2.0, 0.0])) == pytest.approx(math.log(2.0))
    kind_y = gs.weighted_log_det(np.array([[0.0, 1.0]]))
    assert gs.eval_metric(kind_y, np.diag([2.0, 0.0])) == NEG_INF


def test_weight_matrix_validation():
    with pytest.raises(ValidationError):
        gs.weighted_log_det(np.zeros((1, 2)))  # rank deficient
    with pytest.raises(ValidationError):
        gs.weighted_log_det(np.eye(3)[:, :2])  # tall: m=3 rows > n=2 states
    with pytest.raises(ValidationError):
        gs.MetricKind("weighted_log_det")
    with pytest.raises(ValidationError):
        gs.MetricKind("trace", weight=np.eye(2))
    with pytest.raises(ValidationError):
        gs.MetricKind("no_such_metric")


def test_cli_name_mapping():
    for cli_name in CLI_NAMES:
        if cli_name == "weighted-logdet":
            kind = gs.metric_from_name(cli_name, np.eye(2))
        else:
            kind = gs.metric_from_name(cli_name)
        assert kind.name == CLI_NAMES[cli_name]
    with pytest.raises(ValidationError):
        gs.metric_from_name("determinant")


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 6))
def test_full_rank_consistency(seed, n):
    W = random_psd(np.random.default_rng(seed), n)
    inv = gs.eval_metric(gs.TRACE_INVERSE, W)
    pinv = gs.eval_metric(gs.TRACE_PINV, W)
    assert pinv == pytest.approx(inv, rel=1e-10)
    assert gs.eval_metric(gs.LOG_PROD_NONZERO, W) == pytest.approx(
        gs.eval_metric(gs.LOG_DET, W), rel=1e-10
    )


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.floats(0.01, 100.0))
def test_log_det_scale_law(seed, c):
    n = 4
    W = random_psd(np.random.default_rng(seed), n)
    lhs = gs.eval_metric(gs.LOG_DET, c * W)
    rhs = gs.eval_metric(gs.LOG_DET, W) + n * math.log(c)
    assert lhs == pytest.approx(rhs, abs=1e-9 * max(1.0, abs(rhs)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.floats(0.01, 100.0), r=st.integers(0, 4))
def test_rank_invariant_under_scaling(seed, c, r):
    W = random_psd(np.random.default_rng(seed), 4, ranks=r)
    assert gs.eval_metric(gs.RANK, c * W) == gs.eval_metric(gs.RANK, W) == r


def test_monotone_under_psd_increments():
    # full-rank base: every metric is monotone in the semidefinite order
    rng = np.random.default_rng(2024)
    kinds = ALL_KINDS + [gs.weighted_log_det(rng.standard_normal((2, 4)))]
    pairs = 0
    while pairs < 1000:
        W = random_psd(rng, 4)
        D = random_psd(rng, 4, ranks=int(rng.integers(0, 5)))
        for kind in kinds:
            before = gs.eval_metric(kind, W)
            after = gs.eval_metric(kind, W + D)
            slack = 1e-9 * max(1.0, abs(before))
            assert after >= before - slack, (kind.name, before, after)
        pairs += len(kinds)


def test_monotone_from_rank_deficient_base():
    # strict metrics leave -inf, rank/lambda_min/trace grow; the subspace
    # surrogates are only claimed monotone at fixed rank
    rng = np.random.default_rng(7)
    fixed_rank_kinds = [gs.TRACE, gs.TRACE_INVERSE, gs.LOG_DET, gs.RANK, gs.LAMBDA_MIN]
    for _ in range(200):
        W = random_psd(rng, 4, ranks=2)
        D = random_psd(rng, 4, ranks=int(rng.integers(0, 5)))
        for kind in fixed_rank_kinds:
            before = gs.eval_metric(kind, W)
            after = gs.eval_metric(kind, W + D)
            assert after >= before - 1e-9 * max(1.0, abs(before) if before != NEG_INF else 1.0)


def test_marginal_gain_sentinel_rules():
    assert marginal_gain(NEG_INF, NEG_INF) == 0.0
    assert marginal_gain(NEG_INF, -3.0) == math.inf
    assert marginal_gain(1.0, 4.0) == 3.0
    assert marginal_gain(1.0, NEG_INF) == NEG_INF


def test_h2_norm_closed_forms():
    assert gs.h2_norm_sq(0.5 * np.eye(2), np.eye(2)) == pytest.approx(1.0)
    assert gs.h2_norm_sq(np.diag([2.0, 3.0]), np.array([[1.0, 0.0]])) == pytest.approx(2.0)
    with pytest.raises(ValidationError):
        gs.h2_norm_sq(np.eye(2), np.eye(3))


def test_ellipsoid_volume_closed_forms():
    assert gs.ellipsoid_volume(np.eye(2), mode="sqrt") == pytest.approx(math.pi)
    assert gs.ellipsoid_volume(np.eye(2), mode="nth_root") == pytest.approx(math.pi)
    assert gs.ellipsoid_volume(np.array([[4.0]]), mode="sqrt") == pytest.approx(4.0)
    assert gs.ellipsoid_volume(np.array([[4.0]]), mode="nth_root") == pytest.approx(8.0)
    assert gs.ellipsoid_volume(np.diag([4.0, 1.0]), mode="sqrt") == pytest.approx(2 * math.pi)
    assert gs.ellipsoid_volume(np.diag([1.0, 0.0])) == 0.0
    with pytest.raises(ValidationError):
        gs.ellipsoid_volume(np.eye(2), mode="cube")


def test_psd_violation_raises():
    with pytest.raises(PsdViolationError):
        gs.eval_metric(gs.TRACE, np.diag([1.0, -1e-3]))


def test_rank_policy_validation():
    with pytest.raises(ValidationError):
        RankPolicy(rel_tol=2.0)
    with pytest.raises(ValidationError):
        RankPolicy(abs_floor=0.0)
    tight = RankPolicy(rel_tol=1e-2)
    W = np.diag([1.0, 1e-4])
    assert gs.eval_metric(gs.RANK, W, tight) == 1
    assert gs.eval_metric(gs.RANK, W) == 2


def test_batch_matches_scalar():
    rng = np.random.default_rng(5)
    Ws = np.stack([random_psd(rng, 3, ranks=r) for r in (3, 3, 2, 0)])
    for kind in ALL_KINDS:
        batch = eval_metric_batch(kind, Ws)
        singles = [gs.eval_metric(kind, Ws[i]) for i in range(len(Ws))]
        assert list(batch) == singles
