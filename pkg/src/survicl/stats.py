"""Model-agnostic survival statistics.

Kaplan-Meier curves, the time-dependent concordance index, quantile
time bins and the max-time standardisation used for diagnostics.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .dataset import SurvivalDataset
from .errors import DomainError, UndefinedMetricError


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous piecewise-constant function.

    ``values[k]`` holds on ``[times[k], times[k+1])``; ``left`` is the value
    before ``times[0]`` (1.0 for survival curves).
    """

    times: np.ndarray
    values: np.ndarray
    left: float = 1.0

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if times.shape != values.shape or times.ndim != 1:
            raise DomainError("StepFunction times and values must be 1-D and equally long")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise DomainError("StepFunction times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.times, t, side="right") - 1
        padded = np.concatenate([[self.left], self.values])
        out = padded[idx + 1]
        return out if out.ndim else float(out)

    def to_csv_rows(self):
        return [(float(t), float(v)) for t, v in zip(self.times, self.values)]


def kaplan_meier(time, event) -> StepFunction:
    """Product-limit estimate over the distinct event times."""
    time = np.asarray(time, dtype=np.float64)
    event = np.asarray(event).astype(bool)
    if time.size == 0:
        raise DomainError("kaplan_meier: empty input")
    if time.shape != event.shape:
        raise DomainError("kaplan_meier: time and event lengths differ")
    if np.any(time <= 0):
        raise DomainError("kaplan_meier: times must be > 0")
    uniq, inverse = np.unique(time, return_inverse=True)
    deaths = np.bincount(inverse, weights=event, minlength=uniq.size)
    leaving = np.bincount(inverse, minlength=uniq.size)
    at_risk = time.size - np.concatenate([[0], np.cumsum(leaving)[:-1]])
    has_event = deaths > 0
    factors = 1.0 - deaths[has_event] / at_risk[has_event]
    return StepFunction(uniq[has_event], np.cumprod(factors))


def _concordance(curves, col, time, event):
    order = np.argsort(time, kind="stable")
    curves = np.ascontiguousarray(curves[order], dtype=np.float64)
    col = np.ascontiguousarray(col[order], dtype=np.intp)
    t = np.ascontiguousarray(time[order], dtype=np.float64)
    e = np.ascontiguousarray(event[order], dtype=np.int8)
    score, comparable = kernels.concordance_td(curves, col, t, e)
    if comparable == 0:
        raise UndefinedMetricError("time-dependent C-index undefined: no comparable pairs")
    return score / comparable


def c_index_td(surv_at, time, event) -> float:
    """Time-dependent concordance from ``surv_at[i, j] = S(t_i | x_j)``.

    Comparable pairs are ``t_i < t_j`` with ``e_i = 1``; the pair is
    concordant when ``S(t_i|x_i) < S(t_i|x_j)`` and ties count one half.
    """
    surv_at = np.asarray(surv_at, dtype=np.float64)
    time = np.asarray(time, dtype=np.float64)
    event = np.asarray(event).astype(np.int8)
    n = time.shape[0]
    if surv_at.shape != (n, n) or event.shape != (n,):
        raise DomainError(f"c_index_td: expected surv_at of shape {(n, n)}, got {surv_at.shape}")
    return _concordance(surv_at.T, np.arange(n), time, event)


def step_lookup_index(grid, t):
    """Column index of the right-continuous value at ``t`` on a grid-evaluated
    curve whose column 0 is the pre-grid value."""
    return np.searchsorted(np.asarray(grid, dtype=np.float64), t, side="right")


def c_index_td_curves(curves, grid, time, event, left: float = 1.0) -> float:
    """Time-dependent concordance for curves evaluated on a shared grid.

    ``curves[j, g]`` is subject j's survival at ``grid[g]``; values between
    grid points follow right-continuous step interpolation.
    """
    curves = np.asarray(curves, dtype=np.float64)
    time = np.asarray(time, dtype=np.float64)
    event = np.asarray(event).astype(np.int8)
    if curves.ndim != 2 or curves.shape[0] != time.shape[0] or curves.shape[1] != len(grid):
        raise DomainError("c_index_td_curves: curves must be (n_subjects, len(grid))")
    padded = np.concatenate([np.full((curves.shape[0], 1), left), curves], axis=1)
    col = step_lookup_index(grid, time)
    return _concordance(padded, col, time, event)


@dataclass(frozen=True)
class BinEdges:
    """Quantile time grid: ``edges[0] = 0``, ``edges[-1] = inf``, right-open bins."""

    edges: np.ndarray
    requested_bins: int | None = None
    warning: str | None = None

    @property
    def n_bins(self) -> int:
        return len(self.edges) - 1

    @property
    def interior(self) -> np.ndarray:
        return self.edges[1:-1]

    def bin_of(self, t):
        idx = np.searchsorted(self.edges, np.asarray(t, dtype=np.float64), side="right") - 1
        return np.clip(idx, 0, self.n_bins - 1)

    def to_dict(self) -> dict:
        return {"interior": [float(e) for e in self.interior], "requested_bins": self.requested_bins}


def quantile_bins(time, n_bins: int) -> BinEdges:
    """Interior edges at the ``k / n_bins`` quantiles (linear interpolation
    between order statistics).  Coinciding edges are merged with a warning."""
    if n_bins < 2:
        raise DomainError("quantile_bins: n_bins must be >= 2")
    time = np.asarray(time, dtype=np.float64)
    if time.size == 0:
        raise DomainError("quantile_bins: empty input")
    qs = np.quantile(time, np.arange(1, n_bins) / n_bins, method="linear")
    interior = np.unique(qs)
    # an edge at or below the smallest time leaves the first bin empty
    interior = interior[interior > time.min()]
    message = None
    if interior.size < n_bins - 1:
        message = f"quantile_bins: {n_bins} bins requested, {interior.size + 1} distinct after merging"
        warnings.warn(message, RuntimeWarning, stacklevel=2)
    edges = np.concatenate([[0.0], interior, [np.inf]])
    return BinEdges(edges, requested_bins=n_bins, warning=message)


def standardize_times(dataset: SurvivalDataset) -> SurvivalDataset:
    """Divide observed times by the dataset's maximum time."""
    tmax = float(np.max(dataset.time))
    if not tmax > 0:
        raise DomainError("standardize_times: max time must be > 0")
    return replace(dataset, time=dataset.time / tmax, manifest=dict(dataset.manifest))
