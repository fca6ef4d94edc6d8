"""Command-line surface.

Subcommands: randsys, place, counterexample, verify, brute, energy. Every
command emits deterministic JSON (17 significant digits, stable key order)
so repeated runs are byte-identical. Exit codes are a contract:

  0 success            3 selection left the system uncontrollable
  1 parse/validation   4 counterexample gains off their reference values
  2 numerical failure  5 sampling exhausted   6 enumeration guard tripped
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import __version__
from .errors import (
    BoundUnavailableError,
    EnumerationLimitError,
    GramselError,
    NumericalError,
    SamplingExhaustedError,
    ValidationError,
)
from .gramian import build_cache, min_energy_input, simulate_endpoint
from .greedy import SelectionProblem, certified_gap, solve
from .lti import LtiSystem, load_system, random_stable_system, save_system
from .metrics import CLI_NAMES, MetricKind, RankPolicy, metric_from_name
from .oracle import (
    REFERENCE_GAIN_TOL,
    REFERENCE_GAINS,
    brute_force,
    counterexample_check,
    lambda_min_counterexample_system,
    modularity_check,
    submodularity_exhaustive,
    submodularity_sampler,
)
from .serialize import dumps

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_UNCONTROLLABLE = 3
EXIT_MISMATCH = 4
EXIT_EXHAUSTED = 5
EXIT_GUARD = 6


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; route those to the
    # validation exit code instead.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


def _emit(doc: dict, out_path: str | None) -> None:
    text = dumps(doc)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_cli_system(spec: str) -> LtiSystem:
    if spec == "counterexample":
        return lambda_min_counterexample_system()
    if "," in spec:
        a_path, c_path = spec.split(",", 1)
        return load_system((a_path, c_path), fmt="csv-pair")
    return load_system(spec, fmt="json")


def _load_array(path: str, what: str) -> np.ndarray:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ValidationError(f"{what}: {e}") from None
    return np.asarray(doc, dtype=float)


def _metric_from_args(args) -> MetricKind:
    weight = None
    if args.metric == "weighted-logdet":
        if not getattr(args, "weight", None):
            raise ValidationError("weighted-logdet needs --weight pointing at a Q matrix file")
        weight = _load_array(args.weight, "weight matrix")
    return metric_from_name(args.metric, weight)


def _policy_from_args(args) -> RankPolicy:
    if getattr(args, "rank_tol", None) is not None:
        return RankPolicy(rel_tol=args.rank_tol)
    return RankPolicy()


# ---------------------------------------------------------------------------
# commands


def cmd_randsys(args) -> int:
    sys_ = random_stable_system(
        n=args.n, num_candidates=args.num_candidates, seed=args.seed, margin=args.margin
    )
    save_system(sys_, args.out)
    _emit(
        {
            "command": "randsys",
            "out": args.out,
            "n": args.n,
            "num_candidates": args.num_candidates if args.num_candidates is not None else args.n,
            "seed": args.seed,
            "margin": args.margin,
        },
        None,
    )
    return EXIT_OK


def _selection_doc(result, problem, metric_name: str) -> dict:
    if problem.metric.is_submodular:
        guarantee = "greedy value >= (1-((k-1)/k)^k) x optimum (monotone submodular)"
    else:
        guarantee = "none (metric not submodular)"
    return {
        "metric": metric_name,
        "k": problem.k,
        "two_stage": problem.two_stage,
        "selected": result.selected,
        "value": result.value,
        "controllable": result.controllable,
        "guarantee": guarantee,
        "theoretical_ratio": result.theoretical_ratio,
        "certified_upper_bound": result.certified_upper_bound,
        "num_evaluations": result.num_evaluations,
        "trace": [
            {"id": s.chosen, "gain": s.gain, "value": s.value, "rank": s.rank, "stage": s.stage}
            for s in result.trace
        ],
    }


def _resolve_two_stage(args, metric) -> bool:
    # strict metrics default to the rank-first remedy; explicit flags win
    if args.two_stage is None:
        return metric.is_strict
    return args.two_stage


def cmd_place(args) -> int:
    system = _load_cli_system(args.system)
    metric = _metric_from_args(args)
    policy = _policy_from_args(args)
    cache = build_cache(system)
    problem = SelectionProblem(
        cache=cache,
        metric=metric,
        k=args.k,
        policy=policy,
        two_stage=_resolve_two_stage(args, metric),
    )
    result = solve(problem)
    if metric.is_submodular:
        try:
            certified_gap(result, problem)
        except BoundUnavailableError:
            pass
    doc = {"command": "place", **_selection_doc(result, problem, args.metric)}
    _emit(doc, args.out)
    return EXIT_OK if result.controllable else EXIT_UNCONTROLLABLE


def cmd_counterexample(args) -> int:
    system = lambda_min_counterexample_system()
    if args.tamper:
        A = system.A.copy()
        A[0, 0] += 1.0
        system = LtiSystem(A=A, base_columns=system.base_columns, candidates=system.candidates)
    report = counterexample_check(system)
    gains = report.gains()
    matches = {
        key: abs(gains[key] - REFERENCE_GAINS[key]) <= REFERENCE_GAIN_TOL for key in REFERENCE_GAINS
    }
    all_match = all(matches.values())
    doc = {
        "command": "counterexample",
        "gains": gains,
        "violated": report.violated,
        "reference": dict(REFERENCE_GAINS),
        "tolerance": REFERENCE_GAIN_TOL,
        "matches": matches,
        "all_match": all_match,
    }
    if args.json:
        _emit(doc, args.out)
    else:
        lines = [
            f"gain of b3 given {{b1}}     = {gains['gain_b3_given_b1']:.6f} (reference 0.037)",
            f"gain of b3 given {{b1,b2}}  = {gains['gain_b3_given_b1b2']:.6f} (reference 0.033)",
            f"gain of b3 given {{b2}}     = {gains['gain_b3_given_b2']:.6f} (reference 0.001)",
            f"diminishing gains violated: {report.violated}",
            f"all gains within +/-{REFERENCE_GAIN_TOL}: {all_match}",
        ]
        text = "\n".join(lines) + "\n"
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    return EXIT_OK if all_match else EXIT_MISMATCH


def cmd_verify(args) -> int:
    metric = _metric_from_args(args)
    if args.system is None:
        if metric.name != "lambda_min":
            raise ValidationError("--system is required (or the literal 'counterexample')")
        system = lambda_min_counterexample_system()
    else:
        system = _load_cli_system(args.system)
    policy = _policy_from_args(args)
    cache = build_cache(system)
    if metric.name == "trace":
        report = modularity_check(cache, trials=args.trials, seed=args.seed, policy=policy)
        passed = not report.violated
        expectation = "modularity: gains independent of the base set"
    elif metric.name == "lambda_min":
        if len(cache.ids) <= 12:
            report = submodularity_exhaustive(cache, metric, policy=policy)
        else:
            report = submodularity_sampler(
                cache, metric, trials=args.trials, seed=args.seed, policy=policy
            )
        passed = report.violated
        expectation = "at least one diminishing-gains violation (metric not submodular)"
    else:
        report = submodularity_sampler(
            cache, metric, trials=args.trials, seed=args.seed, policy=policy
        )
        passed = not report.violated
        expectation = "zero diminishing-gains violations"
    doc = {
        "command": "verify",
        "expectation": expectation,
        "passed": passed,
        **report.to_json(),
    }
    _emit(doc, args.out)
    # a failed expectation is a numerical finding, not a usage problem
    return EXIT_OK if passed else EXIT_NUMERICAL


def cmd_brute(args) -> int:
    system = _load_cli_system(args.system)
    metric = _metric_from_args(args)
    policy = _policy_from_args(args)
    cache = build_cache(system)
    table = brute_force(cache, metric, args.k, policy=policy)
    problem = SelectionProblem(
        cache=cache,
        metric=metric,
        k=args.k,
        policy=policy,
        two_stage=_resolve_two_stage(args, metric),
    )
    result = solve(problem)
    if args.emit_histogram:
        with open(args.emit_histogram, "w") as fh:
            table.to_csv(fh)
    values = table.values
    finite = values[np.isfinite(values)]
    f_g = result.value
    f_o = table.optimum_value
    shift = float(finite.min()) if finite.size else None
    if shift is None or not math.isfinite(f_g):
        shifted_ratio = None
    elif f_o - shift <= 0.0:
        shifted_ratio = 1.0
    else:
        shifted_ratio = (f_g - shift) / (f_o - shift)
    percentile = float(np.count_nonzero(values < f_g)) / len(values)
    if f_g == -math.inf and f_o == -math.inf:
        volume_ratio = 1.0
    elif f_g == -math.inf:
        volume_ratio = 0.0
    else:
        volume_ratio = math.exp((f_g - f_o) / 2.0)
    doc = {
        "command": "brute",
        "metric": args.metric,
        "k": args.k,
        "num_subsets": len(table),
        "optimum": {"subset": list(table.optimum_subset), "value": f_o},
        "greedy": {
            "selected": result.selected,
            "value": f_g,
            "controllable": result.controllable,
            "two_stage": problem.two_stage,
        },
        "shift": shift,
        "shifted_ratio": shifted_ratio,
        "percentile": percentile,
        "volume_ratio": volume_ratio,
        "histogram": args.emit_histogram,
    }
    _emit(doc, args.out)
    return EXIT_OK


def cmd_energy(args) -> int:
    # finite-horizon reachability does not need a stable A, so this command
    # parses the file directly instead of going through the LtiSystem gate
    try:
        with open(args.system) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ValidationError(f"system file: {e}") from None
    if not isinstance(doc, dict) or "A" not in doc:
        raise ValidationError('system JSON must be an object with an "A" key')
    A = np.asarray(doc["A"], dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"A must be square, got shape {A.shape}")
    n = A.shape[0]
    cols = [np.asarray(c, dtype=float).reshape(-1) for c in doc.get("B0", [])]
    cols += [np.asarray(c["column"], dtype=float).reshape(-1) for c in doc.get("candidates", [])]
    if not cols:
        raise ValidationError("system has no input columns")
    for c in cols:
        if c.shape != (n,):
            raise ValidationError(f"input column length {c.shape[0]} != n={n}")
    B = np.column_stack(cols)
    x_f = _load_array(args.target, "target state").reshape(-1)
    control = min_energy_input(A, B, args.horizon, x_f)
    endpoint = simulate_endpoint(A, B, control.input_evaluator, args.horizon)
    err = float(np.linalg.norm(endpoint - x_f))
    taus = np.linspace(0.0, args.horizon, 9)
    samples = [{"tau": float(t), "u": [float(v) for v in control.input_evaluator(float(t))]} for t in taus]
    doc = {
        "command": "energy",
        "t": args.horizon,
        "target": [float(v) for v in x_f],
        "energy": control.energy,
        "endpoint_error": err,
        "u_samples": samples,
    }
    _emit(doc, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    parser = _Parser(prog="gramsel", description=__doc__)
    parser.add_argument("--version", action="version", version=f"gramsel {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    metric_names = sorted(CLI_NAMES)

    p = sub.add_parser("randsys", help="generate a random stable system file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--num-candidates", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--margin", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_randsys)

    p = sub.add_parser("place", help="greedy actuator selection")
    p.add_argument("--system", required=True)
    p.add_argument("--metric", required=True, choices=metric_names)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--two-stage", dest="two_stage", action="store_true", default=None)
    p.add_argument("--no-two-stage", dest="two_stage", action="store_false")
    p.add_argument("--rank-tol", type=float, default=None)
    p.add_argument("--weight", default=None, help="Q matrix file for weighted-logdet")
    p.add_argument("--out", default=None)
    p.add_argument("--json", action="store_true", help="output is always JSON; accepted for symmetry")
    p.set_defaults(func=cmd_place)

    p = sub.add_parser("counterexample", help="reproduce the lambda-min counterexample")
    p.add_argument("--json", action="store_true")
    p.add_argument("--tamper", action="store_true", help="perturb the dynamics to force a mismatch")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("verify", help="sampled/exhaustive diminishing-gains check")
    p.add_argument("--metric", required=True, choices=metric_names)
    p.add_argument("--system", default=None, help="system file or the literal 'counterexample'")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rank-tol", type=float, default=None)
    p.add_argument("--weight", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("brute", help="score every size-k subset and compare with greedy")
    p.add_argument("--system", required=True)
    p.add_argument("--metric", required=True, choices=metric_names)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--two-stage", dest="two_stage", action="store_true", default=None)
    p.add_argument("--no-two-stage", dest="two_stage", action="store_false")
    p.add_argument("--rank-tol", type=float, default=None)
    p.add_argument("--weight", default=None)
    p.add_argument("--emit-histogram", default=None, help="write the full score table as CSV")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_brute)

    p = sub.add_parser("energy", help="minimum-energy input to reach a target state")
    p.add_argument("--system", required=True)
    p.add_argument("--target", required=True, help="JSON file with the target state vector")
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_energy)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SamplingExhaustedError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_EXHAUSTED
    except EnumerationLimitError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_GUARD
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except GramselError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
