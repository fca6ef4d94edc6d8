"""Greedy subset selection under a cardinality budget.

Three solvers share one evaluation engine: plain greedy, lazy greedy
(priority-queue reuse of stale gains), and the two-stage variant that
builds rank first and only then optimizes a strict metric. Everything is
deterministic: ties break toward the lowest candidate index.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .errors import BoundUnavailableError, ValidationError
from .gramian import GramianCache
from .metrics import (
    DEFAULT_POLICY,
    NEG_INF,
    MetricKind,
    RankPolicy,
    _eval_from_eigenvalues,
    checked_eigenvalues,
    eval_metric_batch,
    marginal_gain,
    numerical_rank,
    secondary_for,
)


def greedy_bound(k: int) -> float:
    """Worst-case value ratio of greedy on monotone submodular objectives."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    return 1.0 - ((k - 1) / k) ** k


@dataclass(frozen=True)
class SelectionProblem:
    cache: GramianCache
    metric: MetricKind
    k: int
    policy: RankPolicy = DEFAULT_POLICY
    two_stage: bool = False
    tie_break: str = "lowest_index"

    def __post_init__(self):
        if self.k < 1 or self.k > len(self.cache.ids):
            raise ValidationError(
                f"k={self.k} out of range for {len(self.cache.ids)} candidates"
            )
        if self.tie_break != "lowest_index":
            raise ValidationError(f"unsupported tie break {self.tie_break!r}")


@dataclass(frozen=True)
class GreedyStep:
    """One iteration record: what was chosen and the state after."""

    chosen: str
    gain: float
    value: float
    rank: int
    stage: str = "metric"  # "rank" for first-stage picks of the two-stage solver


@dataclass
class SelectionResult:
    selected: list[str]
    value: float
    trace: list[GreedyStep]
    theoretical_ratio: float
    certified_upper_bound: float | None = None
    controllable: bool = True
    num_evaluations: int = 0


class _Engine:
    """Selection state: current Gramian sum, chosen indices, trace."""

    def __init__(self, problem: SelectionProblem):
        self.problem = problem
        self.cache = problem.cache
        self.ids = problem.cache.ids
        self.n = problem.cache.n
        self.current = problem.cache.base.matrix.copy()
        self.chosen: list[int] = []
        self.steps: list[GreedyStep] = []
        self.evaluations = 0
        self.value = self._value_of(self.current)

    def _value_of(self, W: np.ndarray) -> float:
        return float(eval_metric_batch(self.problem.metric, W, self.problem.policy))

    def remaining(self) -> list[int]:
        taken = set(self.chosen)
        return [i for i in range(len(self.ids)) if i not in taken]

    def extended(self, indices: list[int]) -> np.ndarray:
        return self.current[None] + self.cache.stack[indices]

    def rank_of_current(self) -> int:
        lam = checked_eigenvalues(self.current[None])
        return int(numerical_rank(lam, self.problem.policy)[0])

    def accept(self, pool_index: int, gain: float, stage: str, value_after: float | None = None) -> None:
        self.chosen.append(pool_index)
        self.current = self.current + self.cache.stack[pool_index]
        self.value = self._value_of(self.current) if value_after is None else value_after
        self.steps.append(
            GreedyStep(
                chosen=self.ids[pool_index],
                gain=gain,
                value=self.value,
                rank=self.rank_of_current(),
                stage=stage,
            )
        )

    def result(self) -> SelectionResult:
        controllable = bool(self.steps and self.steps[-1].rank == self.n)
        return SelectionResult(
            selected=[self.ids[i] for i in self.chosen],
            value=self.value,
            trace=self.steps,
            theoretical_ratio=greedy_bound(self.problem.k),
            controllable=controllable,
            num_evaluations=self.evaluations,
        )


def _sweep_once(engine: _Engine) -> None:
    """One exact greedy iteration: evaluate every remaining candidate."""
    problem = engine.problem
    rem = engine.remaining()
    values_after = eval_metric_batch(problem.metric, engine.extended(rem), problem.policy)
    engine.evaluations += len(rem)
    best_pos = 0
    best_gain = marginal_gain(engine.value, float(values_after[0]))
    for pos in range(1, len(rem)):
        gain = marginal_gain(engine.value, float(values_after[pos]))
        if gain > best_gain:
            best_pos, best_gain = pos, gain
    engine.accept(rem[best_pos], best_gain, stage="metric", value_after=float(values_after[best_pos]))


def greedy_select(problem: SelectionProblem) -> SelectionResult:
    """Plain greedy: k iterations, each adding the candidate with the largest
    marginal gain (ties to the lowest index).

    A transition out of the uncontrollable regime counts as an infinite
    gain; gains between two uncontrollable sets count as zero, so the
    algorithm always returns k elements. A rank-deficient final Gramian is
    reported via ``controllable=False``, not an error.
    """
    engine = _Engine(problem)
    for _ in range(problem.k):
        _sweep_once(engine)
    return engine.result()


def two_stage_greedy(problem: SelectionProblem) -> SelectionResult:
    """Rank-first greedy for strict metrics.

    Stage one maximizes the rank gain; rank ties are ordered by the
    subspace surrogate of the target metric (pseudoinverse trace for the
    inverse-trace target, log product of nonzero eigenvalues for the
    log-det family), then by lowest index. Once the Gramian reaches full
    rank, or the budget runs out, stage two continues plain greedy on the
    target metric.
    """
    if not problem.metric.is_strict:
        raise ValidationError(
            f"two-stage selection expects a strict metric, got {problem.metric.name}"
        )
    secondary = secondary_for(problem.metric)
    engine = _Engine(problem)
    rank_now = engine.rank_of_current()
    while len(engine.chosen) < problem.k and rank_now < engine.n:
        rem = engine.remaining()
        lam = checked_eigenvalues(engine.extended(rem))
        ranks_after = numerical_rank(lam, problem.policy)
        sec_after = _eval_from_eigenvalues(secondary.name, lam, problem.policy, engine.n)
        engine.evaluations += len(rem)
        best_pos = 0
        for pos in range(1, len(rem)):
            if (ranks_after[pos], sec_after[pos]) > (ranks_after[best_pos], sec_after[best_pos]):
                best_pos = pos
        gain = float(ranks_after[best_pos] - rank_now)
        engine.accept(rem[best_pos], gain, stage="rank")
        rank_now = engine.steps[-1].rank
    for _ in range(problem.k - len(engine.chosen)):
        _sweep_once(engine)
    return engine.result()


def lazy_greedy(problem: SelectionProblem) -> SelectionResult:
    """Greedy with stale-gain reuse; selects exactly like greedy_select.

    While the metric value is still ``-inf`` each iteration is a full
    sweep, because gains can jump once controllability is reached and no
    stale priority is trustworthy there. In the finite regime the usual
    priority-queue argument applies: a popped entry is accepted only if it
    was re-evaluated against the current set, and stale priorities only
    overestimate for submodular metrics. Refused for the non-submodular
    minimum-eigenvalue metric.
    """
    if not problem.metric.is_submodular:
        raise ValidationError(
            f"lazy selection requires a submodular metric, got {problem.metric.name}"
        )
    engine = _Engine(problem)
    heap: list[tuple[float, int, float, float, int]] | None = None
    iteration = 0
    while len(engine.chosen) < problem.k:
        if engine.value == NEG_INF:
            _sweep_once(engine)
            iteration += 1
            heap = None
            continue
        if heap is None:
            # entering the finite regime: force one evaluation of everything
            heap = [(-math.inf, i, math.nan, math.nan, -1) for i in engine.remaining()]
            heapq.heapify(heap)
        _, i, gain, value_after, stamp = heapq.heappop(heap)
        if stamp == iteration:
            engine.accept(i, gain, stage="metric", value_after=value_after)
            iteration += 1
            continue
        value_after = float(
            eval_metric_batch(problem.metric, engine.current + engine.cache.stack[i], problem.policy)
        )
        engine.evaluations += 1
        gain = marginal_gain(engine.value, value_after)
        heapq.heappush(heap, (-gain, i, gain, value_after, iteration))
    return engine.result()


def certified_gap(result: SelectionResult, problem: SelectionProblem) -> float:
    """A-posteriori upper bound on the unknown optimum.

    For a monotone submodular metric, the optimum is at most the greedy
    value plus the sum of the k largest marginal gains at the greedy set.
    Requires the greedy value and every such marginal to be finite; the
    bound is stored into ``result.certified_upper_bound``.
    """
    if not problem.metric.is_submodular:
        raise ValidationError(
            f"certified bound requires a submodular metric, got {problem.metric.name}"
        )
    if not math.isfinite(result.value):
        raise BoundUnavailableError("greedy value is not finite")
    cache = problem.cache
    taken = set(result.selected)
    rem = [i for i, cid in enumerate(cache.ids) if cid not in taken]
    gains: list[float] = []
    if rem:
        base = cache.sum_matrix(cache.indices_of(result.selected))
        values_after = eval_metric_batch(problem.metric, base[None] + cache.stack[rem], problem.policy)
        gains = [marginal_gain(result.value, float(v)) for v in values_after]
        if any(not math.isfinite(g) for g in gains):
            raise BoundUnavailableError("marginal gains at the selected set are not all finite")
    top = sorted((max(g, 0.0) for g in gains), reverse=True)[: problem.k]
    bound = result.value + sum(top)
    result.certified_upper_bound = bound
    return bound


def solve(problem: SelectionProblem) -> SelectionResult:
    """Dispatch on the two_stage flag."""
    if problem.two_stage:
        return two_stage_greedy(problem)
    return greedy_select(problem)
