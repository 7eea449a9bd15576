"""Pure numpy implementations of the compiled kernels.

Same signatures and input contract as ``survicl._kernels``: arrays
sorted by ascending time, C-contiguous float64, events as int8.
"""

import numpy as np


def concordance_td(curves, col, time, event):
    n = time.shape[0]
    # first index with time strictly greater than time[i]
    starts = np.searchsorted(time, time, side="right")
    score = 0.0
    comparable = 0
    for i in np.flatnonzero(event):
        start = starts[i]
        if start >= n:
            continue
        si = curves[i, col[i]]
        later = curves[start:, col[i]]
        score += float(np.count_nonzero(si < later)) + 0.5 * float(np.count_nonzero(si == later))
        comparable += n - start
    return score, comparable


def breslow_derivatives(X, lp, time, event):
    n, p = X.shape
    shift = max(float(lp.max()), 0.0) if n else 0.0
    w = np.exp(lp - shift)
    # risk set of row i = rows with time >= time[i]; first row of each tie block
    first = np.searchsorted(time, time, side="left")
    s0 = np.cumsum(w[::-1])[::-1][first]
    s1 = np.cumsum((w[:, None] * X)[::-1], axis=0)[::-1][first]

    ev = event.astype(bool)
    loglik = float(np.sum(lp[ev]) - np.sum(np.log(s0[ev]) + shift))
    grad = X[ev].sum(axis=0) - (s1[ev] / s0[ev, None]).sum(axis=0)

    # sum_k d_k S2_k / S0_k == X^T diag(w * c) X with c_i = sum_{events k, t_k <= t_i} 1 / S0_k
    inc = np.where(ev, 1.0 / s0, 0.0)
    last = np.searchsorted(time, time, side="right") - 1
    c = np.cumsum(inc)[last]
    hess = -(X.T * (w * c)) @ X
    a = s1[ev] / s0[ev, None]
    hess += a.T @ a
    return loglik, grad, hess
