"""Cox proportional hazards with Breslow ties and a Breslow baseline.

Newton-Raphson on the ridge-penalised partial log-likelihood, computed on
internally standardised covariates and mapped back to the input scale.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DomainError
from .stats import StepFunction, c_index_td_curves

logger = logging.getLogger(__name__)

BETA_CAP = 20.0
DEFAULT_RIDGE = 1e-6


@dataclass
class CoxModel:
    beta: np.ndarray
    baseline_cum_hazard: StepFunction
    fit_report: dict = field(default_factory=dict)

    def linear_predictor(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return X @ self.beta

    def survival_matrix(self, X, grid) -> np.ndarray:
        """``S(grid[g] | X[j])`` as an (n, len(grid)) array."""
        H0 = np.asarray(self.baseline_cum_hazard(np.asarray(grid, dtype=np.float64)))
        risk = np.exp(self.linear_predictor(X))
        return np.exp(-np.outer(risk, np.atleast_1d(H0)))


def partial_likelihood(Z, time, event, beta):
    """Breslow log partial likelihood with gradient and Hessian (sorted inputs)."""
    lp = Z @ beta
    return kernels.breslow_derivatives(Z, lp, time, event)


def fit(X, time, event, ridge: float = DEFAULT_RIDGE, max_iter: int = 100, tol: float = 1e-8) -> CoxModel:
    """Maximise ``loglik(beta) - ridge/2 |beta|^2`` by damped Newton steps."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    time = np.asarray(time, dtype=np.float64)
    event = np.asarray(event).astype(np.int8)
    if X.shape[0] != time.shape[0] or event.shape != time.shape:
        raise DomainError("cox.fit: X, time and event must have matching rows")
    if not event.any():
        raise DomainError("cox.fit: at least one event is required")
    if ridge < 0:
        raise DomainError("cox.fit: ridge must be >= 0")

    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale <= 1e-12] = 1.0
    order = np.argsort(time, kind="stable")
    Z = np.ascontiguousarray(((X - mean) / scale)[order])
    t = np.ascontiguousarray(time[order])
    e = np.ascontiguousarray(event[order])
    p = Z.shape[1]

    def objective(b):
        ll, g, h = partial_likelihood(Z, t, e, b)
        return ll - 0.5 * ridge * b @ b, g - ridge * b, h - ridge * np.eye(p), ll

    beta = np.zeros(p)
    obj, grad, hess, ll = objective(beta)
    history = [obj]
    separated = False
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(grad), initial=0.0) < tol:
            it -= 1
            break
        try:
            step = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(-hess, grad, rcond=None)[0]
        accepted = False
        for _ in range(60):
            cand = beta + step
            c_obj, c_grad, c_hess, c_ll = objective(cand)
            if np.isfinite(c_obj) and c_obj >= obj:
                accepted = True
                break
            # below objective resolution: accept steps that shrink the gradient
            flat = abs(c_obj - obj) <= 1e-12 * max(1.0, abs(obj))
            if np.isfinite(c_obj) and flat and np.max(np.abs(c_grad)) < np.max(np.abs(grad)):
                accepted = True
                break
            step = 0.5 * step
        if not accepted:
            logger.debug("cox.fit: step-halving exhausted at iteration %d", it)
            break
        beta, obj, grad, hess, ll = cand, c_obj, c_grad, c_hess, c_ll
        history.append(obj)
        if np.any(np.abs(beta) > BETA_CAP):
            separated = True
            beta = np.clip(beta, -BETA_CAP, BETA_CAP)
            obj, grad, hess, ll = objective(beta)
            break

    beta_orig = beta / scale
    model = CoxModel(beta_orig, _breslow_baseline(X, time, event, beta_orig))
    model.fit_report = {
        "iterations": it,
        "gradient_norm": float(np.max(np.abs(grad), initial=0.0)),
        "log_partial_likelihood": float(ll),
        "objective_history": [float(v) for v in history],
        "separation": separated,
        "ridge": ridge,
        "standardized_beta": beta,
    }
    return model


def _breslow_baseline(X, time, event, beta) -> StepFunction:
    lp = X @ beta
    shift = float(lp.max())
    w = np.exp(lp - shift)
    order = np.argsort(time, kind="stable")
    t, e, w = time[order], event[order].astype(bool), w[order]
    uniq = np.unique(t[e])
    if uniq.size == 0:
        return StepFunction(np.array([]), np.array([]), left=0.0)
    # risk-set weight at each distinct event time: rows with time >= t_k
    suffix = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]])
    at_risk = suffix[np.searchsorted(t, uniq, side="left")]
    deaths = np.bincount(np.searchsorted(uniq, t[e]), minlength=uniq.size)
    increments = deaths / at_risk * np.exp(-shift)
    return StepFunction(uniq, np.cumsum(increments), left=0.0)


def predict_survival(model: CoxModel, x, grid) -> StepFunction:
    """Survival curve ``exp(-H0(t) e^{beta^T x})`` on the given grid."""
    grid = np.asarray(grid, dtype=np.float64)
    values = model.survival_matrix(np.atleast_2d(x), grid)[0]
    return StepFunction(grid, values)


def concordance(model: CoxModel, X, time, event) -> float:
    """Time-dependent C-index of the fitted model on (X, time, event)."""
    grid = model.baseline_cum_hazard.times
    if grid.size == 0:
        grid = np.array([np.max(time) + 1.0])
    curves = model.survival_matrix(X, grid)
    return c_index_td_curves(curves, grid, time, event)
