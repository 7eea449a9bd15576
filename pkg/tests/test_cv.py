import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from survicl.config import CvPlan
from survicl.cv import CvReport, fold_assignment, fold_splits, run_cv
from survicl.dataset import SurvivalDataset
from survicl.errors import DomainError
from survicl.io import load_vendored


@given(st.integers(10, 500), st.integers(2, 10), st.integers(0, 1000), st.floats(0.0, 0.3))
def test_splits_partition_rows(n, k, seed, frac):
    splits = fold_splits(n, CvPlan(k, frac, seed))
    tests = np.concatenate([s[2] for s in splits])
    assert np.array_equal(np.sort(tests), np.arange(n))
    sizes = [len(s[2]) for s in splits]
    assert max(sizes) - min(sizes) <= 1
    for train, tune, test in splits:
        assert not set(train) & set(tune) and not set(train) & set(test) and not set(tune) & set(test)
        assert len(train) + len(tune) + len(test) == n


def test_fold_assignment_is_seeded():
    assert np.array_equal(fold_assignment(50, 5, 1), fold_assignment(50, 5, 1))
    assert not np.array_equal(fold_assignment(50, 5, 1), fold_assignment(50, 5, 2))
    with pytest.raises(DomainError):
        fold_assignment(3, 5, 0)


def test_constant_model_scores_one_half():
    rep = run_cv(load_vendored("veteran"), "constant")
    assert all(f.c_index_td == 0.5 for f in rep.folds)


def test_coxph_cv_on_veteran_is_deterministic(tmp_path):
    ds = load_vendored("veteran")
    a = run_cv(ds, "coxph")
    b = run_cv(ds, "coxph", workers=2)
    assert [f.c_index_td for f in a.folds] == [f.c_index_td for f in b.folds]
    assert 0.65 < a.mean < 0.78
    p1 = a.write(tmp_path / "a.csv")
    p2 = b.write(tmp_path / "b.csv")
    assert p1.read_bytes() == p2.read_bytes()
    lines = p1.read_text().splitlines()
    assert lines[0] == "fold,c_index_td,n_test,n_events" and len(lines) == 7
    assert lines[-1].startswith("summary,")


def test_undefined_fold_is_excluded():
    n = 20
    X = np.arange(n, dtype=float)[:, None]
    time = np.arange(1.0, n + 1)
    event = np.zeros(n, dtype=int)
    splits = fold_splits(n, CvPlan(5, 0.1, 0))
    event[splits[1][2]] = 1  # only fold 1 holds events
    event[splits[2][2][:1]] = 1
    with pytest.warns(RuntimeWarning):
        rep = run_cv(SurvivalDataset(X, time, event), "coxph")
    undefined = [f.fold for f in rep.folds if not f.defined]
    assert 0 in undefined and math.isfinite(rep.mean)
    assert len(rep.defined_scores) == 5 - len(undefined)


def test_report_statistics():
    rep = CvReport("x", [])
    assert math.isnan(rep.mean) and math.isnan(rep.std)


def test_unknown_model_kind():
    with pytest.raises(DomainError):
        run_cv(load_vendored("veteran"), "forest")
    with pytest.raises(DomainError):
        run_cv(load_vendored("veteran"), "sic")
