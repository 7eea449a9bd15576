"""Nested k-fold cross-validation harness."""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cox
from .config import CvPlan
from .dataset import SurvivalDataset
from .errors import DomainError, UndefinedMetricError
from .io import impute_median
from .prior import derive_seed
from .stats import c_index_td

logger = logging.getLogger(__name__)

MODEL_KINDS = ("coxph", "sic", "constant")


def fold_assignment(n: int, n_folds: int, seed: int) -> np.ndarray:
    """Fold label per row: a seeded permutation cut into near-equal parts."""
    if n < n_folds:
        raise DomainError(f"cannot split {n} rows into {n_folds} folds")
    perm = np.random.default_rng(derive_seed(seed, n, n_folds)).permutation(n)
    folds = np.empty(n, dtype=np.intp)
    for k, part in enumerate(np.array_split(perm, n_folds)):
        folds[part] = k
    return folds


def fold_splits(n: int, plan: CvPlan):
    """``(train, tuning, test)`` index arrays per fold; tuning rows are
    drawn from the fold's training rows and held out of training."""
    plan.validate()
    folds = fold_assignment(n, plan.n_folds, plan.seed)
    out = []
    for k in range(plan.n_folds):
        test = np.flatnonzero(folds == k)
        rest = np.flatnonzero(folds != k)
        rng = np.random.default_rng(derive_seed(plan.seed, n, k, 7))
        n_tune = int(round(plan.tuning_fraction * rest.size))
        shuffled = rng.permutation(rest)
        out.append((np.sort(shuffled[n_tune:]), np.sort(shuffled[:n_tune]), test))
    return out


@dataclass
class FoldResult:
    fold: int
    c_index_td: float
    n_test: int
    n_events: int
    defined: bool = True


@dataclass
class CvReport:
    model_kind: str
    folds: list[FoldResult]
    plan: dict = field(default_factory=dict)

    @property
    def defined_scores(self) -> list[float]:
        return [f.c_index_td for f in self.folds if f.defined]

    @property
    def mean(self) -> float:
        s = self.defined_scores
        return float(np.mean(s)) if s else math.nan

    @property
    def std(self) -> float:
        s = self.defined_scores
        return float(np.std(s, ddof=1)) if len(s) > 1 else math.nan

    def rows(self):
        rows = [[f.fold, f.c_index_td if f.defined else "undefined", f.n_test, f.n_events] for f in self.folds]
        rows.append(["summary", self.mean, sum(f.n_test for f in self.folds), sum(f.n_events for f in self.folds)])
        return rows

    def write(self, path) -> Path:
        """CSV report (fold rows then the summary row) plus a JSON sidecar."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["fold", "c_index_td", "n_test", "n_events"])
            for r in self.rows():
                w.writerow([repr(v) if isinstance(v, float) else v for v in r])
        side = {"model": self.model_kind, "mean": self.mean, "std": self.std,
                "n_defined": len(self.defined_scores), "plan": self.plan}
        path.with_suffix(".json").write_text(json.dumps(side, sort_keys=True, indent=1) + "\n")
        return path


def _score_fold(args):
    fold, kind, X_tr, t_tr, e_tr, X_te, t_te, e_te, model = args
    n_events = int(e_te.sum())
    if n_events == 0:
        return FoldResult(fold, math.nan, len(t_te), 0, defined=False)
    X_tr, X_te = impute_median(X_tr, X_te)
    try:
        if kind == "coxph":
            fitted = cox.fit(X_tr, t_tr, e_tr)
            c = cox.concordance(fitted, X_te, t_te, e_te)
        elif kind == "sic":
            from .evaluation import discrete_c_index
            from .model import predict

            pred = predict(model, SurvivalDataset(X_tr, t_tr, e_tr), X_te)
            c = discrete_c_index(pred, t_te, e_te)
        else:  # constant predictions: every pair is a tie
            c = c_index_td(np.full((len(t_te), len(t_te)), 0.5), t_te, e_te)
    except UndefinedMetricError:
        return FoldResult(fold, math.nan, len(t_te), n_events, defined=False)
    return FoldResult(fold, float(c), len(t_te), n_events)


def run_cv(dataset: SurvivalDataset, model_kind: str, plan: CvPlan | None = None, model=None,
           workers: int = 1) -> CvReport:
    """Per-fold C^td on held-out folds.

    ``coxph`` fits on each fold's training rows with the fixed ridge; ``sic``
    uses those rows as context for a single forward pass (``model`` must be
    a loaded ``SicModel``).  Missing values are imputed with training-row
    medians.  Folds without test events are reported as undefined and left
    out of the mean.
    """
    plan = (plan or CvPlan()).validate()
    if model_kind not in MODEL_KINDS:
        raise DomainError(f"unknown model kind {model_kind!r}; choose from {MODEL_KINDS}")
    if model_kind == "sic" and model is None:
        raise DomainError("run_cv: the sic model kind needs a model")
    jobs = []
    for k, (train, _tune, test) in enumerate(fold_splits(dataset.n, plan)):
        jobs.append((k, model_kind, dataset.X[train], dataset.time[train], dataset.event[train],
                     dataset.X[test], dataset.time[test], dataset.event[test], model))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_score_fold, jobs))
    else:
        results = [_score_fold(j) for j in jobs]
    results.sort(key=lambda r: r.fold)
    for r in results:
        if not r.defined:
            msg = f"fold {r.fold}: C-index undefined (test events: {r.n_events}), excluded from the mean"
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            logger.warning(msg)
    return CvReport(model_kind, results, plan={"n_folds": plan.n_folds,
                                               "tuning_fraction": plan.tuning_fraction, "seed": plan.seed})
