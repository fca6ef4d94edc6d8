import numpy as np
import pytest

import gramsel as gs


def make_diag_system(diag, columns=None, ids=None):
    """System with A = diag(entries) and unit-vector candidates by default."""
    diag = np.asarray(diag, dtype=float)
    n = len(diag)
    if columns is None:
        columns = [np.eye(n)[:, i] for i in range(n)]
    if ids is None:
        ids = [f"e{i + 1}" for i in range(len(columns))]
    cands = tuple(gs.CandidateActuator(cid, col) for cid, col in zip(ids, columns))
    return gs.LtiSystem(A=np.diag(diag), base_columns=np.zeros((n, 0)), candidates=cands)


@pytest.fixture
def diag3():
    return make_diag_system([-1.0, -2.0, -3.0])


@pytest.fixture
def diag3_cache(diag3):
    return gs.build_cache(diag3)


@pytest.fixture
def counterexample_system():
    return gs.lambda_min_counterexample_system()


@pytest.fixture
def run_cli(capsys):
    from gramsel.cli import main

    def run(*args):
        code = main([str(a) for a in args])
        captured = capsys.readouterr()
        return code, captured.out

    return run
