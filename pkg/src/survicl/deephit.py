"""Discrete-time survival head: PMF/survival reconstruction and the DeepHit loss.

The loss mixes a discrete-time likelihood with an exponential ranking
penalty over admissible pairs::

    L = alpha * L_nll + (1 - alpha) * L_rank

``bin_idx`` holds each subject's observed time index (see
``stats.BinEdges.bin_of``).  Every function takes plain numpy arrays;
``deephit_loss_grad`` returns the analytic gradient with respect to the
pre-softmax logits, which the autodiff engine wraps as a fused op.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stats import BinEdges

EPS = 1e-7


@dataclass
class DiscreteSurvival:
    bins: BinEdges
    pmf: np.ndarray

    @property
    def survival(self) -> np.ndarray:
        return survival_curve(self.pmf)

    def survival_at(self, t) -> np.ndarray:
        """``S(t | x_j)`` for every subject j, right-continuous in t."""
        return self.survival[:, self.bins.bin_of(t)]


def pmf_from_logits(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=-1, keepdims=True)


def survival_curve(pmf) -> np.ndarray:
    """``S_k = 1 - sum_{j<=k} p_j``, clipped at zero against rounding."""
    return np.maximum(1.0 - np.cumsum(pmf, axis=-1), 0.0)


def _prepare(pmf, bin_idx, event):
    pmf = np.atleast_2d(np.asarray(pmf, dtype=np.float64))
    bin_idx = np.asarray(bin_idx, dtype=np.intp).reshape(-1)
    event = np.asarray(event).astype(bool).reshape(-1)
    if bin_idx.shape[0] != pmf.shape[0] or event.shape[0] != pmf.shape[0]:
        raise ValueError("pmf, bin_idx and event must have matching rows")
    if np.any((bin_idx < 0) | (bin_idx >= pmf.shape[1])):
        raise ValueError("bin_idx out of range")
    return pmf, bin_idx, event


def admissible_pairs(bin_idx, event) -> np.ndarray:
    """Boolean matrix ``A[i, j]``: i has an event at t_i and j is still at
    risk after it (``t_j > t_i``, or ``t_j == t_i`` with j censored)."""
    bin_idx = np.asarray(bin_idx).reshape(-1)
    event = np.asarray(event).astype(bool).reshape(-1)
    ti, tj = bin_idx[:, None], bin_idx[None, :]
    later = (tj > ti) | ((tj == ti) & ~event[None, :])
    return event[:, None] & later


def nll_loss(pmf, bin_idx, event) -> float:
    pmf, bin_idx, event = _prepare(pmf, bin_idx, event)
    rows = np.arange(pmf.shape[0])
    cdf = np.cumsum(pmf, axis=1)[rows, bin_idx]
    p_event = pmf[rows, bin_idx]
    ll = np.where(event, np.log(np.maximum(p_event, EPS)), np.log(np.maximum(1.0 - cdf, EPS)))
    return float(-ll.mean())


def rank_loss(pmf, bin_idx, event, sigma: float) -> float:
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    pmf, bin_idx, event = _prepare(pmf, bin_idx, event)
    A = admissible_pairs(bin_idx, event)
    if not A.any():
        return 0.0
    cdf = np.cumsum(pmf, axis=1)
    F_at = cdf[:, bin_idx]  # F_at[j, i] = F_j(t_i)
    diff = np.diag(F_at)[:, None] - F_at.T  # F_i(t_i) - F_j(t_i)
    return float(np.exp(-diff[A] / sigma).mean())


def deephit_loss(pmf, bin_idx, event, alpha: float = 0.5, sigma: float = 0.1) -> float:
    nll = nll_loss(pmf, bin_idx, event) if alpha > 0 else 0.0
    rank = rank_loss(pmf, bin_idx, event, sigma) if alpha < 1 else 0.0
    if alpha == 1:
        return nll
    if alpha == 0:
        return rank
    return alpha * nll + (1.0 - alpha) * rank


def deephit_loss_grad(logits, bin_idx, event, alpha: float = 0.5, sigma: float = 0.1):
    """Loss value and its gradient with respect to ``logits``."""
    pmf = pmf_from_logits(logits)
    pmf, bin_idx, event = _prepare(pmf, bin_idx, event)
    n, K = pmf.shape
    rows = np.arange(n)
    cdf = np.cumsum(pmf, axis=1)
    # gF[i, k]: dL/dF_i(k); gp: direct dL/dp
    gF = np.zeros((n, K))
    gp = np.zeros((n, K))

    value = 0.0
    if alpha > 0:
        p_ev = pmf[rows, bin_idx]
        surv = 1.0 - cdf[rows, bin_idx]
        ll = np.where(event, np.log(np.maximum(p_ev, EPS)), np.log(np.maximum(surv, EPS)))
        value += alpha * float(-ll.mean())
        ev_ok = event & (p_ev > EPS)
        gp[rows[ev_ok], bin_idx[ev_ok]] -= alpha / (n * p_ev[ev_ok])
        ce_ok = ~event & (surv > EPS)
        gF[rows[ce_ok], bin_idx[ce_ok]] += alpha / (n * surv[ce_ok])

    if alpha < 1:
        A = admissible_pairs(bin_idx, event)
        m = int(A.sum())
        if m:
            F_at = cdf[:, bin_idx]
            diff = np.diag(F_at)[:, None] - F_at.T
            w = np.where(A, np.exp(-np.where(A, diff, 0.0) / sigma), 0.0)
            value += (1.0 - alpha) * float(w.sum() / m)
            c = (1.0 - alpha) / (m * sigma)
            # d/dF_i(t_i) of exp(-(F_i - F_j)/s) = -w/s ; d/dF_j(t_i) = +w/s
            np.add.at(gF, (rows, bin_idx), -c * w.sum(axis=1))
            # gF[j, b_i] += c * w[i, j]
            jj = np.broadcast_to(rows[None, :], (n, n))
            bi = np.broadcast_to(bin_idx[:, None], (n, n))
            np.add.at(gF, (jj.ravel(), bi.ravel()), c * w.ravel())

    # F_i(k) = sum_{j<=k} p_ij  =>  dL/dp_ij += sum_{k>=j} gF[i, k]
    gp += np.cumsum(gF[:, ::-1], axis=1)[:, ::-1]
    grad = pmf * (gp - np.sum(gp * pmf, axis=1, keepdims=True))
    return value, grad
