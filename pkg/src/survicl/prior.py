"""End-to-end synthetic survival datasets: SCM covariates, extended-hazard
event times, independent and administrative censoring."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import scm
from .config import REGIMES, PriorConfig
from .dataset import SurvivalDataset
from .errors import DomainError, GenerationError, ParameterError
from .hazards import BaselineFamily, sample_event_time

MAX_ATTEMPTS = 16


@dataclass(frozen=True)
class CensoringConfig:
    enabled: bool
    scale: float
    admin_enabled: bool
    admin_quantile: float


def apply_regime(regime: str, eta1, eta2):
    """Impose the PH / AFT / AH constraint on the risk pair."""
    eta1 = np.asarray(eta1, dtype=np.float64)
    eta2 = np.asarray(eta2, dtype=np.float64)
    if regime == "PH":
        return np.zeros_like(eta1), eta2
    if regime == "AFT":
        return eta2.copy(), eta2
    if regime == "AH":
        return eta1, np.zeros_like(eta2)
    if regime == "EH":
        return eta1, eta2
    raise DomainError(f"unknown regime {regime!r}")


def _log_uniform(rng, lo, hi):
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def sample_survival_params(seed, config: PriorConfig | None = None):
    """Draw (baseline family, regime, censoring config) for one dataset."""
    config = (config or PriorConfig()).validate()
    rng = np.random.default_rng(seed)
    family = config.families[int(rng.integers(len(config.families)))]
    names = [r for r in REGIMES if r in config.regime_probs]
    weights = np.array([config.regime_probs[r] for r in names], dtype=np.float64)
    regime = names[int(rng.choice(len(names), p=weights / weights.sum()))]
    alpha = _log_uniform(rng, *config.alpha)
    beta = _log_uniform(rng, *config.beta)
    fam = BaselineFamily(family, alpha, beta, strict=config.strict_lognormal)
    cens = CensoringConfig(
        enabled=config.censoring,
        scale=_log_uniform(rng, *config.censoring_scale),
        admin_enabled=config.admin_censoring,
        admin_quantile=float(rng.uniform(*config.admin_quantile)),
    )
    return fam, regime, cens


def apply_censoring(T, T_cens, T_admin):
    """Observed time ``min(T, T_cens, T_admin)``; ties count as events."""
    T = np.asarray(T, dtype=np.float64)
    T_cens = np.asarray(T_cens, dtype=np.float64)
    T_admin = np.asarray(T_admin, dtype=np.float64)
    t_obs = np.minimum(T, np.minimum(T_cens, T_admin))
    event = ((T <= T_cens) & (T <= T_admin)).astype(np.int8)
    if t_obs.ndim == 0:
        return float(t_obs), int(event)
    return t_obs, event


def open_uniform(rng, n: int) -> np.ndarray:
    """Uniform draws on the open interval (0, 1)."""
    return (rng.integers(0, 2**53, size=n, dtype=np.int64).astype(np.float64) + 0.5) / 2.0**53


def _attempt(config: PriorConfig, n_rows: int, seq: np.random.SeedSequence):
    s_prog, s_exec, s_params, s_time = seq.spawn(4)
    program = scm.sample_program(config, s_prog)
    table = scm.execute(program, n_rows, s_exec)
    X, eta1, eta2 = scm.extract_dataset(table, program)
    fam, regime, cens = sample_survival_params(s_params, config)
    eta1, eta2 = apply_regime(regime, eta1, eta2)

    rng = np.random.default_rng(s_time)
    with np.errstate(over="ignore", invalid="ignore"):
        T = sample_event_time(eta1, eta2, fam, open_uniform(rng, n_rows))
        if cens.enabled:
            T_cens = cens.scale * sample_event_time(0.0, 0.0, fam, open_uniform(rng, n_rows))
        else:
            T_cens = np.full(n_rows, np.inf)
    follow_up = np.minimum(T, T_cens)
    if cens.admin_enabled and np.all(np.isfinite(follow_up)):
        cutoff = float(np.quantile(follow_up, cens.admin_quantile))
    else:
        cutoff = np.inf
    t_obs, event = apply_censoring(T, T_cens, np.full(n_rows, cutoff))
    if not np.all(np.isfinite(t_obs)) or np.any(t_obs <= 0):
        raise GenerationError("event times overflowed or underflowed")
    if not event.any():
        raise GenerationError("dataset has no events")

    manifest = {
        "family": fam.family,
        "alpha": fam.alpha,
        "beta": fam.beta,
        "regime": regime,
        "signal_strength": program.signal_strength,
        "censoring_scale": cens.scale if cens.enabled else None,
        "admin_quantile": cens.admin_quantile if cens.admin_enabled else None,
        "n_rows": n_rows,
        "n_features": int(X.shape[1]),
    }
    return SurvivalDataset(X, t_obs, event, manifest), eta1, eta2


def generate_dataset(config: PriorConfig, n_rows: int, seed: int, return_risk: bool = False):
    """Sample one synthetic survival dataset from the prior.

    The whole pipeline is retried with a fresh sub-seed (up to 16 times)
    when it yields non-finite values or no events.  With
    ``return_risk=True`` the regime-constrained ``(eta1, eta2)`` are
    returned alongside the dataset.
    """
    if n_rows < 8:
        raise DomainError("generate_dataset: n_rows must be >= 8")
    config.validate()
    last = None
    for attempt in range(MAX_ATTEMPTS):
        seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(attempt,))
        try:
            ds, eta1, eta2 = _attempt(config, n_rows, seq)
        except (GenerationError, ParameterError, FloatingPointError) as exc:
            last = exc
            continue
        ds.manifest.update(seed=int(seed), attempt=attempt)
        return (ds, eta1, eta2) if return_risk else ds
    raise GenerationError(f"generation failed after {MAX_ATTEMPTS} attempts: {last}")


def derive_seed(*keys: int) -> int:
    """Stable 63-bit seed derived from integer keys."""
    state = np.random.SeedSequence([int(k) for k in keys]).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))
