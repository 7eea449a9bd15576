import csv

import numpy as np

from survicl.config import PriorConfig
from survicl.diagnostics import KM_GRID, diagnose_prior, mean_curvature


def test_mean_curvature_sign():
    assert mean_curvature(1 - KM_GRID ** 2) < 0
    assert mean_curvature((1 - KM_GRID) ** 2) > 0
    assert abs(mean_curvature(1 - KM_GRID)) < 1e-9


def test_report_files_and_summary(tmp_path):
    rep = diagnose_prior(PriorConfig(), 12, seed=3, n_rows=128)
    s = rep.summary()
    assert s["n"] + s["failures"] == 12
    assert s["min"] <= s["q1"] <= s["median"] <= s["q3"] <= s["max"]
    assert s["concave_curves"] + s["convex_curves"] <= s["n"]
    c_path, km_path = rep.write(tmp_path)
    with c_path.open() as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == s["n"]
    with km_path.open() as f:
        assert sum(1 for _ in f) == 1 + s["n"] * KM_GRID.size
    for curve in rep.km_curves:
        assert curve[0] == 1.0 and np.all(np.diff(curve) <= 0)


def test_diagnose_is_deterministic_across_workers():
    a = diagnose_prior(PriorConfig(), 6, seed=1, n_rows=96)
    b = diagnose_prior(PriorConfig(), 6, seed=1, n_rows=96, workers=2)
    assert a.rows == b.rows
