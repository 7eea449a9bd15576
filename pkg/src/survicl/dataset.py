"""The right-censored dataset container used throughout the package."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError


@dataclass
class SurvivalDataset:
    """Covariates ``X`` (n x d), observed ``time`` (n,) and ``event`` flags (n,).

    ``manifest`` records how the rows came to be: generation parameters for
    synthetic data, or an ingestion record for real files.
    """

    X: np.ndarray
    time: np.ndarray
    event: np.ndarray
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        self.time = np.asarray(self.time, dtype=np.float64)
        self.event = np.asarray(self.event).astype(np.int8)
        self.validate()

    def validate(self) -> None:
        n = self.time.shape[0]
        if self.X.ndim != 2 or self.X.shape[0] != n or self.event.shape != (n,):
            raise DomainError(
                f"inconsistent row counts: X {self.X.shape}, time {self.time.shape}, event {self.event.shape}"
            )
        if not np.all(np.isfinite(self.time)) or np.any(self.time <= 0):
            raise DomainError("times must be finite and > 0")
        if np.any((self.event != 0) & (self.event != 1)):
            raise DomainError("event flags must be 0 or 1")

    @property
    def n(self) -> int:
        return int(self.time.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.X.shape[1])

    def subset(self, idx) -> "SurvivalDataset":
        idx = np.asarray(idx)
        return replace(self, X=self.X[idx], time=self.time[idx], event=self.event[idx],
                       manifest=dict(self.manifest))
