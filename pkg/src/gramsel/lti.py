"""Linear time-invariant systems with a pool of candidate actuator columns.

A system is ``xdot = A x + B u`` where the input matrix ``B`` is assembled
from a fixed base block plus a chosen subset of candidate columns. Systems
are immutable after construction and safe to share between threads.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InstabilityError, ValidationError

# Strictly stable means abscissa below this; exactly-marginal systems are rejected.
STABILITY_TOL = -1e-10

DEFAULT_MARGIN = 0.5


def spectral_abscissa(A: np.ndarray) -> float:
    """Largest real part over the eigenvalues of a square matrix."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {A.shape}")
    return float(np.max(np.linalg.eigvals(A).real))


@dataclass(frozen=True)
class CandidateActuator:
    """One selectable input direction: a label and a length-n column."""

    id: str
    column: np.ndarray

    def __post_init__(self):
        col = np.asarray(self.column, dtype=float).reshape(-1)
        object.__setattr__(self, "column", col)
        if not np.all(np.isfinite(col)):
            raise ValidationError(f"candidate {self.id!r}: column has non-finite entries")
        if np.all(col == 0.0):
            raise ValidationError(
                f"candidate {self.id!r}: zero column adds no controllability and is rejected"
            )


@dataclass(frozen=True)
class LtiSystem:
    """Stable dynamics plus base input columns and an ordered candidate pool.

    Invariants checked at construction: A strictly stable, candidate ids
    pairwise distinct, every column of length n.
    """

    A: np.ndarray
    base_columns: np.ndarray
    candidates: tuple[CandidateActuator, ...]
    n: int = field(init=False)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValidationError(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "n", n)

        base = np.asarray(self.base_columns, dtype=float)
        if base.size == 0:
            base = np.zeros((n, 0))
        if base.ndim != 2 or base.shape[0] != n:
            raise ValidationError(
                f"base columns must be {n}-row, got shape {base.shape}"
            )
        object.__setattr__(self, "base_columns", base)

        object.__setattr__(self, "candidates", tuple(self.candidates))
        ids = [c.id for c in self.candidates]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValidationError(f"duplicate candidate ids: {dupes}")
        for c in self.candidates:
            if c.column.shape != (n,):
                raise ValidationError(
                    f"candidate {c.id!r}: column length {c.column.shape[0]} != n={n}"
                )

        abscissa = spectral_abscissa(A)
        if abscissa >= STABILITY_TOL:
            raise InstabilityError(abscissa)

    @property
    def candidate_ids(self) -> list[str]:
        return [c.id for c in self.candidates]

    def candidate_index(self, cid: str) -> int:
        for i, c in enumerate(self.candidates):
            if c.id == cid:
                return i
        raise ValidationError(f"unknown candidate id {cid!r}")

    def input_matrix(self, ids) -> np.ndarray:
        """Assembled n x (m0 + |ids|) input matrix [B0, b_s ...] in pool order."""
        order = {c.id: i for i, c in enumerate(self.candidates)}
        for cid in ids:
            if cid not in order:
                raise ValidationError(f"unknown candidate id {cid!r}")
        chosen = sorted(set(ids), key=order.__getitem__)
        cols = [self.base_columns] + [self.candidates[order[c]].column[:, None] for c in chosen]
        return np.hstack(cols)


def random_stable_system(
    n: int,
    num_candidates: int | None = None,
    seed: int = 0,
    margin: float = DEFAULT_MARGIN,
) -> LtiSystem:
    """Generate a random strictly stable system with unit-vector candidates.

    The dynamics are ``A = G - (alpha(G) + margin) I`` with ``G`` standard
    normal, which places the spectral abscissa at exactly ``-margin``.
    Candidates are the first ``num_candidates`` standard unit vectors with
    ids ``e1..e<num_candidates>``; pools that are not unit vectors must come
    from system files instead. Deterministic for a fixed seed.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    if margin <= 0:
        raise ValidationError("margin must be positive")
    if num_candidates is None:
        num_candidates = n
    if num_candidates > n:
        raise ValidationError(
            f"this generator only emits unit-vector candidates: num_candidates="
            f"{num_candidates} > n={n}"
        )
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, n))
    A = G - (spectral_abscissa(G) + margin) * np.eye(n)
    eye = np.eye(n)
    cands = [CandidateActuator(f"e{i + 1}", eye[:, i]) for i in range(num_candidates)]
    return LtiSystem(A=A, base_columns=np.zeros((n, 0)), candidates=tuple(cands))


# ---------------------------------------------------------------------------
# file formats


def _parse_matrix(obj, what: str) -> np.ndarray:
    try:
        M = np.array(obj, dtype=float)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"{what}: not a numeric array: {e}") from None
    if M.ndim != 2:
        raise ValidationError(f"{what}: expected a 2-d array, got ndim={M.ndim}")
    return M


def _system_from_json(text: str) -> LtiSystem:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError(f"malformed JSON: {e}") from None
    if not isinstance(doc, dict) or "A" not in doc:
        raise ValidationError('system JSON must be an object with an "A" key')
    A = _parse_matrix(doc["A"], "A")
    n = A.shape[0]
    if "B0" in doc and doc["B0"]:
        b0_cols = [np.asarray(c, dtype=float).reshape(-1) for c in doc["B0"]]
        for c in b0_cols:
            if c.shape != (n,):
                raise ValidationError(f"B0 column length {c.shape[0]} != n={n}")
        base = np.column_stack(b0_cols)
    else:
        base = np.zeros((n, 0))
    cands = []
    for entry in doc.get("candidates", []):
        if not isinstance(entry, dict) or "id" not in entry or "column" not in entry:
            raise ValidationError('each candidate needs "id" and "column"')
        cands.append(CandidateActuator(str(entry["id"]), np.asarray(entry["column"], dtype=float)))
    return LtiSystem(A=A, base_columns=base, candidates=tuple(cands))


def _system_from_csv_pair(a_text: str, cand_text: str) -> LtiSystem:
    try:
        a_rows = [[float(x) for x in row] for row in csv.reader(io.StringIO(a_text)) if row]
    except ValueError as e:
        raise ValidationError(f"A csv: {e}") from None
    A = _parse_matrix(a_rows, "A")
    n = A.shape[0]
    rows = [row for row in csv.reader(io.StringIO(cand_text)) if row]
    if not rows:
        raise ValidationError("candidates csv is empty")
    ids = [h.strip() for h in rows[0]]
    data = rows[1:]
    if len(data) != n:
        raise ValidationError(f"candidates csv: {len(data)} data rows, expected n={n}")
    try:
        cols = np.array([[float(x) for x in row] for row in data])
    except ValueError as e:
        raise ValidationError(f"candidates csv: {e}") from None
    if cols.shape[1] != len(ids):
        raise ValidationError("candidates csv: ragged rows")
    cands = [CandidateActuator(cid, cols[:, j]) for j, cid in enumerate(ids)]
    return LtiSystem(A=A, base_columns=np.zeros((n, 0)), candidates=tuple(cands))


def _read(source) -> str:
    if hasattr(source, "read"):
        data = source.read()
        return data.decode() if isinstance(data, bytes) else data
    with open(source, "rb") as fh:
        return fh.read().decode()


def load_system(source, fmt: str = "json") -> LtiSystem:
    """Read a system from a file path or stream.

    ``fmt="json"`` takes a single source; ``fmt="csv-pair"`` takes a
    ``(A_source, candidates_source)`` pair: A as n lines of n comma-separated
    numbers, candidates as a header line of ids over n data rows with one
    column per candidate.
    """
    if fmt == "json":
        return _system_from_json(_read(source))
    if fmt == "csv-pair":
        try:
            a_src, c_src = source
        except (TypeError, ValueError):
            raise ValidationError("csv-pair needs a (A, candidates) source pair") from None
        return _system_from_csv_pair(_read(a_src), _read(c_src))
    raise ValidationError(f"unknown system format {fmt!r}")


def system_to_json(sys: LtiSystem) -> dict:
    """Plain-dict form of a system, round-trips exactly through load_system."""
    doc: dict = {"A": [[float(x) for x in row] for row in sys.A]}
    if sys.base_columns.shape[1]:
        doc["B0"] = [[float(x) for x in sys.base_columns[:, j]] for j in range(sys.base_columns.shape[1])]
    doc["candidates"] = [
        {"id": c.id, "column": [float(x) for x in c.column]} for c in sys.candidates
    ]
    return doc


def save_system(sys: LtiSystem, dest) -> None:
    """Write the JSON encoding to a path or text stream."""
    from .serialize import dumps

    text = dumps(system_to_json(sys))
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w") as fh:
            fh.write(text)
