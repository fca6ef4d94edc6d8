import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

import gramsel as gs
from gramsel.errors import InstabilityError, ValidationError
from gramsel.lti import system_to_json


def load_json_text(text):
    return gs.load_system(io.StringIO(text), fmt="json")


def test_minimal_system():
    sys_ = load_json_text('{"A": [[-1]], "candidates": [{"id": "u1", "column": [1]}]}')
    assert sys_.n == 1
    assert sys_.candidate_ids == ["u1"]
    assert_array_equal(sys_.A, [[-1.0]])


def test_unstable_system_rejected_with_abscissa():
    with pytest.raises(InstabilityError) as exc:
        load_json_text('{"A": [[1]], "candidates": []}')
    assert exc.value.abscissa == pytest.approx(1.0)


def test_marginal_system_rejected():
    with pytest.raises(InstabilityError):
        load_json_text('{"A": [[0]], "candidates": []}')


def test_counterexample_round_trips_from_json(counterexample_system):
    doc = system_to_json(counterexample_system)
    sys_ = load_json_text(json.dumps(doc))
    assert sys_.n == 3
    assert sys_.candidate_ids == ["b1", "b2", "b3"]
    assert_array_equal(sys_.A, counterexample_system.A)


def test_spectral_abscissa_basics():
    assert gs.spectral_abscissa(-np.eye(2)) == pytest.approx(-1.0)
    assert gs.spectral_abscissa(np.diag([-1.0, -2.0])) == pytest.approx(-1.0)


def test_spectral_abscissa_counterexample_regression(counterexample_system):
    # eigenvalues are -2 and a complex pair at real part -5.5
    assert gs.spectral_abscissa(counterexample_system.A) == pytest.approx(-2.0, abs=1e-9)


def test_random_system_n1_margin_forces_dynamics():
    for seed in range(5):
        sys_ = gs.random_stable_system(1, seed=seed, margin=0.5)
        assert sys_.A[0, 0] == pytest.approx(-0.5, abs=1e-12)


def test_random_system_deterministic():
    a = gs.random_stable_system(7, num_candidates=4, seed=11)
    b = gs.random_stable_system(7, num_candidates=4, seed=11)
    assert_array_equal(a.A, b.A)
    assert a.candidate_ids == b.candidate_ids
    for ca, cb in zip(a.candidates, b.candidates):
        assert_array_equal(ca.column, cb.column)


def test_random_system_abscissa_at_margin():
    sys_ = gs.random_stable_system(25, seed=1)
    assert gs.spectral_abscissa(sys_.A) <= -0.5 + 1e-10


def test_random_system_candidate_limit():
    with pytest.raises(ValidationError):
        gs.random_stable_system(3, num_candidates=4, seed=0)
    with pytest.raises(ValidationError):
        gs.random_stable_system(0, seed=0)
    with pytest.raises(ValidationError):
        gs.random_stable_system(3, seed=0, margin=0.0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 8))
def test_json_round_trip_is_exact(seed, n):
    sys_ = gs.random_stable_system(n, seed=seed)
    buf = io.StringIO()
    gs.save_system(sys_, buf)
    again = load_json_text(buf.getvalue())
    assert_array_equal(again.A, sys_.A)
    assert again.candidate_ids == sys_.candidate_ids
    for ca, cb in zip(again.candidates, sys_.candidates):
        assert_array_equal(ca.column, cb.column)


def test_round_trip_with_base_columns():
    base = np.array([[1.0, 0.5], [0.0, 2.0]])
    sys_ = gs.LtiSystem(
        A=np.diag([-1.0, -2.0]),
        base_columns=base,
        candidates=(gs.CandidateActuator("c1", [1.0, 1.0]),),
    )
    buf = io.StringIO()
    gs.save_system(sys_, buf)
    again = load_json_text(buf.getvalue())
    assert_array_equal(again.base_columns, base)


def test_csv_pair_round_trip():
    a_csv = "-1.0,0.0\n0.5,-2.0\n"
    cand_csv = "u1,u2\n1.0,0.0\n0.25,1.5\n"
    sys_ = gs.load_system((io.StringIO(a_csv), io.StringIO(cand_csv)), fmt="csv-pair")
    assert sys_.n == 2
    assert sys_.candidate_ids == ["u1", "u2"]
    assert_allclose(sys_.candidates[1].column, [0.0, 1.5])


def test_unstable_rejection_is_total():
    # matrices shifted to sit at abscissa +0.5 must never load
    failures = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        G = rng.standard_normal((4, 4))
        A = G + (0.5 - gs.spectral_abscissa(G)) * np.eye(4)
        try:
            gs.LtiSystem(A=A, base_columns=np.zeros((4, 0)), candidates=())
        except InstabilityError:
            failures += 1
    assert failures == 100


def test_duplicate_candidate_ids_rejected():
    with pytest.raises(ValidationError, match="duplicate"):
        load_json_text(
            '{"A": [[-1, 0], [0, -1]], "candidates": ['
            '{"id": "u", "column": [1, 0]}, {"id": "u", "column": [0, 1]}]}'
        )


def test_zero_column_rejected():
    with pytest.raises(ValidationError, match="zero column"):
        gs.CandidateActuator("z", [0.0, 0.0])


def test_column_length_mismatch_rejected():
    with pytest.raises(ValidationError):
        load_json_text('{"A": [[-1]], "candidates": [{"id": "u", "column": [1, 2]}]}')


def test_malformed_input_rejected():
    with pytest.raises(ValidationError):
        load_json_text("{not json")
    with pytest.raises(ValidationError):
        load_json_text('{"B": [[-1]]}')
    with pytest.raises(ValidationError):
        load_json_text('{"A": [[-1, 0]]}')
    with pytest.raises(ValidationError):
        gs.load_system(io.StringIO("x"), fmt="csv-pair")
    with pytest.raises(ValidationError):
        gs.load_system(io.StringIO("x"), fmt="yaml")


def test_input_matrix_assembly(diag3):
    B = diag3.input_matrix(["e3", "e1"])
    # pool order, not request order
    assert_array_equal(B, np.eye(3)[:, [0, 2]])
    with pytest.raises(ValidationError):
        diag3.input_matrix(["nope"])
