"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward, get_precision, precision


@dataclass
class GradCheckResult:
    max_rel_error: float
    param: str | None
    index: tuple | None
    analytic: float
    numeric: float
    n_checked: int

    def __float__(self):
        return self.max_rel_error


def grad_check(fn: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-6,
               max_coords: int = 64, seed: int = 0, floor: float = 1e-8,
               numeric_precision: str = "float64") -> GradCheckResult:
    """Compare backward() against central differences of ``fn``.

    ``fn`` rebuilds the graph from ``params`` on every call.  The analytic
    gradient is taken at the current storage precision; finite differences
    are evaluated with parameters promoted to ``numeric_precision`` so that
    f32 forward rounding does not swamp the difference quotient.  Tensors
    with more than ``max_coords`` entries are checked on a random subset.
    The relative error per coordinate is ``|a - n| / max(|a|, |n|, floor)``.
    """
    for p in params:
        p.zero_grad()
    backward(fn())
    analytic = [np.zeros(p.shape) if p.grad is None else np.array(p.grad, dtype=np.float64) for p in params]
    for p in params:
        p.zero_grad()

    rng = np.random.default_rng(seed)
    worst = GradCheckResult(0.0, None, None, 0.0, 0.0, 0)
    saved = [p.data for p in params]
    count = 0
    try:
        with precision(numeric_precision):
            for p in params:
                p.data = p.data.astype(get_precision())
            for k, p in enumerate(params):
                flat = np.arange(p.size)
                if p.size > max_coords:
                    flat = np.sort(rng.choice(p.size, size=max_coords, replace=False))
                base = p.data.copy()
                for f in flat:
                    idx = np.unravel_index(f, p.shape)
                    h = step * max(1.0, abs(float(base[idx])))
                    up, down = base.copy(), base.copy()
                    up[idx] += h
                    down[idx] -= h
                    p.data = up
                    f_up = float(fn().data)
                    p.data = down
                    f_down = float(fn().data)
                    p.data = base
                    num = (f_up - f_down) / (2.0 * h)
                    ana = float(analytic[k][idx])
                    err = abs(ana - num) / max(abs(ana), abs(num), floor)
                    count += 1
                    if err > worst.max_rel_error or worst.param is None:
                        worst = GradCheckResult(err, p.name or f"param{k}", tuple(int(i) for i in idx), ana, num, 0)
    finally:
        for p, d in zip(params, saved):
            p.data = d
    worst.n_checked = count
    return worst
