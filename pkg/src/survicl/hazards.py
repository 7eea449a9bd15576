"""Baseline survival families and extended-hazard event-time sampling.

Each family is described by its cumulative hazard ``H0`` and the closed
form inverse ``H0^{-1}``.  Event times under the extended hazard model
``h(t|x) = h0(t e^{eta1}) e^{eta2}`` are drawn by inverse transform:

    T = e^{-eta1} H0^{-1}(e^{eta1 - eta2} (-log U))
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import FAMILIES
from .errors import DomainError, ParameterError

_SQRT2 = math.sqrt(2.0)

# Acklam's rational approximation coefficients for the normal quantile.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425

_erfc = np.frompyfunc(math.erfc, 1, 1)


def normal_cdf(z):
    """Standard normal CDF via ``erfc``; accurate in both tails."""
    z = np.asarray(z, dtype=np.float64)
    out = 0.5 * np.asarray(_erfc(-z / _SQRT2), dtype=np.float64)
    return out if out.ndim else float(out)


def normal_sf(z):
    """Upper tail ``1 - Phi(z)`` without cancellation."""
    return normal_cdf(-np.asarray(z, dtype=np.float64))


def normal_quantile(p):
    """Inverse of the standard normal CDF.

    Acklam's rational approximation followed by one Halley step against
    the erfc-based CDF.  ``p`` must lie strictly inside (0, 1).
    """
    p = np.asarray(p, dtype=np.float64)
    if np.any(~(p > 0) | ~(p < 1)):
        raise DomainError("normal_quantile: p must lie in the open interval (0, 1)")
    x = np.empty_like(p)

    lo = p < _P_LOW
    hi = p > 1 - _P_LOW
    mid = ~(lo | hi)

    if np.any(lo):
        q = np.sqrt(-2 * np.log(p[lo]))
        x[lo] = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    if np.any(hi):
        q = np.sqrt(-2 * np.log1p(-p[hi]))
        x[hi] = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        x[mid] = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
            ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1)

    # Halley refinement; evaluate the residual on the smaller tail.
    lower = x <= 0
    tail = np.where(lower, normal_cdf(x), normal_sf(x))
    target = np.where(lower, p, 1 - p)
    e = np.where(lower, tail - target, target - tail)
    u = e * math.sqrt(2 * math.pi) * np.exp(0.5 * x * x)
    x = x - u / (1 + 0.5 * x * u)
    return x if x.ndim else float(x)


def _upper_quantile(y):
    """``Phi^{-1}(1 - e^{-y})`` computed without rounding 1 - e^{-y} to 1."""
    y = np.asarray(y, dtype=np.float64)
    out = np.empty_like(y)
    small = y < math.log(2.0)
    if np.any(small):
        out[small] = normal_quantile(-np.expm1(-y[small]))
    if np.any(~small):
        # e^{-y} underflows past y ~ 745; saturate at the smallest normal double
        out[~small] = -normal_quantile(np.maximum(np.exp(-y[~small]), np.finfo(np.float64).tiny))
    return out


@dataclass(frozen=True)
class BaselineFamily:
    """Baseline distribution: ``family`` name with scale ``alpha`` and shape ``beta``.

    For the lognormal family ``alpha`` is the log-scale location and any real
    value is accepted unless ``strict`` is set.
    """

    family: str
    alpha: float
    beta: float
    strict: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        # arrays broadcast against the evaluation points (one family per point)
        a, b = np.asarray(self.alpha, dtype=np.float64), np.asarray(self.beta, dtype=np.float64)
        if a.ndim or b.ndim:
            object.__setattr__(self, "alpha", a)
            object.__setattr__(self, "beta", b)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ParameterError("alpha and beta must be finite")
        if self.family == "lognormal":
            if np.any(b <= 0) or (self.strict and np.any(a <= 0)):
                raise ParameterError(f"lognormal requires beta > 0{' and alpha > 0' if self.strict else ''}")
        elif self.family == "gompertz":
            # beta < 0 makes H0 negative for every t > 0, so no valid times exist
            if np.any(a <= 0) or np.any(b <= 0):
                raise ParameterError("gompertz requires alpha > 0 and beta > 0")
        elif np.any(a <= 0) or np.any(b <= 0):
            raise ParameterError(f"{self.family} requires alpha > 0 and beta > 0")

    def _at(self, shape, mask):
        """Parameters broadcast to ``shape`` and restricted to ``mask``."""
        a, b = self.alpha, self.beta
        if np.ndim(a):
            a = np.broadcast_to(a, shape)[mask]
        if np.ndim(b):
            b = np.broadcast_to(b, shape)[mask]
        return a, b

    def to_dict(self) -> dict:
        alpha, beta = (v.tolist() if isinstance(v, np.ndarray) else v for v in (self.alpha, self.beta))
        return {"family": self.family, "alpha": alpha, "beta": beta}


def inv_cum_hazard(fam: BaselineFamily, y):
    """Inverse baseline cumulative hazard ``H0^{-1}(y)`` for ``y >= 0``."""
    y = np.asarray(y, dtype=np.float64)
    if np.any(~(y >= 0)):
        raise DomainError("inv_cum_hazard: y must be >= 0")
    y = np.broadcast_to(y, np.broadcast_shapes(y.shape, np.shape(fam.alpha), np.shape(fam.beta)))
    out = np.zeros(y.shape)
    pos = y > 0
    a, b = fam._at(y.shape, pos)
    yp = y[pos]
    if fam.family == "weibull":
        out[pos] = a * yp ** (1.0 / b)
    elif fam.family == "gompertz":
        out[pos] = np.log1p(a / b * yp) / a
    elif fam.family == "lognormal":
        out[pos] = np.exp(a + b * _upper_quantile(yp))
    elif fam.family == "loglogistic":
        out[pos] = a * np.expm1(yp) ** (1.0 / b)
    else:
        w = b * _upper_quantile(yp)
        out[pos] = a * (0.5 * (w + np.sqrt(w * w + 4.0))) ** 2
    return out if out.ndim else float(out)


def cum_hazard(fam: BaselineFamily, t):
    """Baseline cumulative hazard ``H0(t) = -log S0(t)`` for ``t > 0``."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(~(t >= 0)):
        raise DomainError("cum_hazard: t must be positive")
    t = np.broadcast_to(t, np.broadcast_shapes(t.shape, np.shape(fam.alpha), np.shape(fam.beta)))
    out = np.zeros(t.shape)
    pos = t > 0
    a, b = fam._at(t.shape, pos)
    tp = t[pos]
    if fam.family == "weibull":
        out[pos] = (tp / a) ** b
    elif fam.family == "gompertz":
        out[pos] = b / a * np.expm1(a * tp)
    elif fam.family == "lognormal":
        out[pos] = -np.log(normal_sf((np.log(tp) - a) / b))
    elif fam.family == "loglogistic":
        out[pos] = np.log1p((tp / a) ** b)
    else:
        r = np.sqrt(tp / a)
        out[pos] = -np.log(normal_sf((r - 1.0 / r) / b))
    return out if out.ndim else float(out)


def baseline_survival(fam: BaselineFamily, t):
    return np.exp(-np.asarray(cum_hazard(fam, t)))


def _check_u(u):
    u = np.asarray(u, dtype=np.float64)
    if np.any(~(u > 0) | ~(u < 1)):
        raise DomainError("survival quantile u must lie in (0, 1)")
    return u


def sample_event_time(eta1, eta2, fam: BaselineFamily, u):
    """Extended-hazard event time ``e^{-eta1} H0^{-1}(e^{eta1-eta2} (-log u))``."""
    u = _check_u(u)
    eta1 = np.asarray(eta1, dtype=np.float64)
    eta2 = np.asarray(eta2, dtype=np.float64)
    y = np.exp(eta1 - eta2) * -np.log(u)
    return np.exp(-eta1) * inv_cum_hazard(fam, y)


def sample_ph(eta2, fam: BaselineFamily, u):
    """Proportional hazards: ``H0^{-1}(e^{-eta2} (-log u))``."""
    u = _check_u(u)
    return inv_cum_hazard(fam, np.exp(-np.asarray(eta2, dtype=np.float64)) * -np.log(u))


def sample_aft(eta, fam: BaselineFamily, u):
    """Accelerated failure time: ``e^{-eta} H0^{-1}(-log u)``."""
    u = _check_u(u)
    return np.exp(-np.asarray(eta, dtype=np.float64)) * inv_cum_hazard(fam, -np.log(u))


def sample_ah(eta1, fam: BaselineFamily, u):
    """Accelerated hazard: ``e^{-eta1} H0^{-1}(e^{eta1} (-log u))``."""
    u = _check_u(u)
    eta1 = np.asarray(eta1, dtype=np.float64)
    return np.exp(-eta1) * inv_cum_hazard(fam, np.exp(eta1) * -np.log(u))


def conditional_cdf(t, eta1, eta2, fam: BaselineFamily):
    """``P(T <= t | eta)`` under the extended hazard model."""
    t = np.asarray(t, dtype=np.float64)
    h = np.exp(eta2 - eta1) * cum_hazard(fam, t * math.exp(eta1))
    return -np.expm1(-h)
