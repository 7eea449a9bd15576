"""Held-out evaluation of the in-context model against Cox baselines."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import cox
from .config import PriorConfig
from .dataset import SurvivalDataset
from .deephit import DiscreteSurvival
from .errors import UndefinedMetricError
from .prior import derive_seed, generate_dataset
from .stats import c_index_td_curves


def discrete_c_index(pred: DiscreteSurvival, time, event) -> float:
    """C^td of binned survival predictions; curves are constant within bins."""
    grid = pred.bins.edges[:-1]
    return c_index_td_curves(pred.survival, grid, time, event)


def ph_eval_prior(base: PriorConfig | None = None, min_signal: float = 1.0) -> PriorConfig:
    """PH-only prior with signal strength of at least ``min_signal``."""
    base = base or PriorConfig()
    hi = max(base.signal_strength[1], min_signal)
    return dataclasses.replace(base, regime_probs={"PH": 1.0}, signal_strength=(min_signal, hi)).validate()


@dataclass
class HeldOutTask:
    context: SurvivalDataset
    query: SurvivalDataset
    eta_context: np.ndarray
    eta_query: np.ndarray


def heldout_tasks(n_datasets: int = 50, seed: int = 20_000, n_context: int = 256, n_query: int = 256,
                  prior: PriorConfig | None = None) -> list[HeldOutTask]:
    """Seeded PH datasets split into the first ``n_context`` and last
    ``n_query`` rows; the true risk score is kept for the oracle baseline."""
    prior = prior or ph_eval_prior()
    tasks = []
    k = 0
    while len(tasks) < n_datasets:
        ds, _, eta2 = generate_dataset(prior, n_context + n_query, derive_seed(seed, k), return_risk=True)
        k += 1
        ctx, qry = np.arange(n_context), np.arange(n_context, n_context + n_query)
        if not ds.event[ctx].any() or ds.event[qry].sum() < 1:
            continue
        tasks.append(HeldOutTask(ds.subset(ctx), ds.subset(qry), eta2[ctx], eta2[qry]))
    return tasks


def cox_c_index(X_ctx, t_ctx, e_ctx, X_qry, t_qry, e_qry) -> float:
    model = cox.fit(X_ctx, t_ctx, e_ctx)
    return cox.concordance(model, X_qry, t_qry, e_qry)


def sic_c_index(model, context: SurvivalDataset, query: SurvivalDataset) -> float:
    from .model import predict

    return discrete_c_index(predict(model, context, query.X), query.time, query.event)


def evaluate_suite(model, tasks, context_rows: int | None = None, baselines: bool = True) -> dict:
    """Mean C^td over tasks for the model and (optionally) both Cox baselines.

    ``context_rows`` truncates each context to its first rows.
    """
    sic, feat, oracle = [], [], []
    for task in tasks:
        ctx = task.context
        if context_rows is not None:
            idx = np.arange(min(context_rows, ctx.n))
            if not ctx.event[idx].any():
                idx = np.concatenate([idx, np.flatnonzero(ctx.event)[:1]])
            ctx = ctx.subset(idx)
        q = task.query
        try:
            if model is not None:
                sic.append(sic_c_index(model, ctx, q))
            if baselines:
                feat.append(cox_c_index(ctx.X, ctx.time, ctx.event, q.X, q.time, q.event))
                oracle.append(cox_c_index(task.eta_context, task.context.time, task.context.event,
                                          task.eta_query[:, None], q.time, q.event))
        except UndefinedMetricError:
            continue
    out = {"n": len(tasks)}
    for name, vals in (("sic", sic), ("cox_features", feat), ("cox_oracle", oracle)):
        if vals:
            out[name] = float(np.mean(vals))
            out[f"{name}_values"] = vals
    return out
