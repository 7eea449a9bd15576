"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--sizes 500 2000 8000] [--repeat 5]

Prints one line per (kernel, size) with the best-of-N wall time of each
backend, the speed-up and the largest absolute disagreement.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from survicl import kernels


def _best(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _concordance_inputs(n, rng):
    grid = 64
    curves = np.sort(rng.uniform(size=(n, grid + 1)), axis=1)[:, ::-1].copy()
    time_ = np.sort(rng.exponential(size=n))
    col = np.searchsorted(np.linspace(0, time_.max(), grid), time_, side="right").astype(np.intp)
    event = (rng.uniform(size=n) < 0.7).astype(np.int8)
    return curves, col, time_, event


def _breslow_inputs(n, rng, p=10):
    X = rng.normal(size=(n, p))
    lp = X @ rng.normal(scale=0.3, size=p)
    time_ = np.sort(np.round(rng.exponential(size=n), 2) + 0.01)
    event = (rng.uniform(size=n) < 0.7).astype(np.int8)
    return X, lp, time_, event


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[500, 2000, 8000])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    py = kernels.python_backend
    try:
        from survicl import _kernels as cy
    except ImportError:
        print("compiled backend unavailable; build the extension first (pip install -e .)")
        return 1

    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}{'n':>7}{'compiled s':>13}{'python s':>12}{'speed-up':>10}{'max |diff|':>13}")
    for n in args.sizes:
        cases = [
            ("concordance_td", _concordance_inputs(n, rng)),
            ("breslow_derivatives", _breslow_inputs(n, rng)),
        ]
        for name, inputs in cases:
            tc, rc = _best(lambda: getattr(cy, name)(*inputs), args.repeat)
            tp, rp = _best(lambda: getattr(py, name)(*inputs), args.repeat)
            diff = max(float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))
                       for a, b in zip(rc, rp))
            print(f"{name:<22}{n:>7}{tc:>13.5f}{tp:>12.5f}{tp / tc:>10.1f}{diff:>13.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
