"""Run configuration: prior, model, curriculum and CV plan.

Everything here round-trips through plain JSON so that a single file
reproduces a CLI run.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .errors import ConfigError

FAMILIES = ("weibull", "gompertz", "lognormal", "loglogistic", "birnbaum_saunders")
REGIMES = ("PH", "AFT", "AH", "EH")


def _range(value, name: str, lo_bound: float | None = None) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a [low, high] pair, got {value!r}") from None
    if lo > hi:
        raise ConfigError(f"{name}: low {lo} exceeds high {hi}")
    if lo_bound is not None and lo < lo_bound:
        raise ConfigError(f"{name}: low {lo} below {lo_bound}")
    return lo, hi


@dataclass
class PriorConfig:
    n_features: tuple[int, int] = (2, 10)
    n_nodes: tuple[int, int] = (5, 32)
    edge_prob: tuple[float, float] = (0.1, 0.5)
    mlp_fraction: float = 0.5
    noise_scale: tuple[float, float] = (1e-3, 0.3)
    signal_strength: tuple[float, float] = (0.25, 2.0)
    regime_probs: dict[str, float] = field(
        default_factory=lambda: {"PH": 0.25, "AFT": 0.25, "AH": 0.25, "EH": 0.25}
    )
    families: tuple[str, ...] = FAMILIES
    alpha: tuple[float, float] = (0.5, 5.0)
    beta: tuple[float, float] = (0.5, 3.0)
    censoring: bool = True
    censoring_scale: tuple[float, float] = (0.5, 4.0)
    admin_censoring: bool = True
    admin_quantile: tuple[float, float] = (0.3, 1.0)
    strict_lognormal: bool = False
    clamp: float = 100.0

    def validate(self) -> "PriorConfig":
        lo, hi = _range(self.n_features, "n_features", 1)
        if hi > 100:
            raise ConfigError(f"n_features: at most 100 covariates supported, got {hi:g}")
        self.n_features = (int(lo), int(hi))
        nlo, nhi = _range(self.n_nodes, "n_nodes", 3)
        if nhi < self.n_features[1] + 2:
            raise ConfigError(
                f"n_nodes upper bound {nhi:g} cannot host {self.n_features[1]} features + 2 targets"
            )
        self.n_nodes = (int(nlo), int(nhi))
        self.edge_prob = _range(self.edge_prob, "edge_prob", 0.0)
        if self.edge_prob[1] > 1:
            raise ConfigError("edge_prob must lie in [0, 1]")
        if not 0.0 <= self.mlp_fraction <= 1.0:
            raise ConfigError("mlp_fraction must lie in [0, 1]")
        self.noise_scale = _range(self.noise_scale, "noise_scale", 0.0)
        self.signal_strength = _range(self.signal_strength, "signal_strength", 0.0)
        self.alpha = _range(self.alpha, "alpha")
        self.beta = _range(self.beta, "beta")
        if self.alpha[0] <= 0 or self.beta[0] <= 0:
            raise ConfigError("alpha and beta ranges must be positive")
        self.censoring_scale = _range(self.censoring_scale, "censoring_scale")
        if self.censoring_scale[0] <= 0:
            raise ConfigError("censoring_scale must be positive")
        self.admin_quantile = _range(self.admin_quantile, "admin_quantile")
        if not (0 < self.admin_quantile[0] and self.admin_quantile[1] <= 1):
            raise ConfigError("admin_quantile must lie in (0, 1]")
        self.families = tuple(self.families)
        if not self.families or any(f not in FAMILIES for f in self.families):
            raise ConfigError(f"families must be a non-empty subset of {FAMILIES}")
        probs = dict(self.regime_probs)
        if any(k not in REGIMES for k in probs) or any(v < 0 for v in probs.values()):
            raise ConfigError(f"regime_probs keys must be in {REGIMES} with non-negative weights")
        if sum(probs.values()) <= 0:
            raise ConfigError("regime_probs must have positive total weight")
        self.regime_probs = probs
        if self.clamp <= 0:
            raise ConfigError("clamp must be positive")
        return self


@dataclass
class ModelConfig:
    d_model: int = 32
    n_heads: int = 4
    n_row_layers: int = 1
    n_dataset_layers: int = 2
    n_bins: int = 10
    max_features: int = 100
    dropout: float = 0.0
    ff_mult: int = 2
    time_event_variant: str = "prose"

    def validate(self) -> "ModelConfig":
        if self.d_model <= 0 or self.n_heads <= 0 or self.d_model % self.n_heads:
            raise ConfigError("d_model must be a positive multiple of n_heads")
        if self.n_bins < 2:
            raise ConfigError("n_bins must be >= 2")
        if not 1 <= self.max_features <= 100:
            raise ConfigError("max_features must lie in [1, 100]")
        if self.n_row_layers < 0 or self.n_dataset_layers < 0:
            raise ConfigError("layer counts must be non-negative")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.time_event_variant not in ("prose", "formula"):
            raise ConfigError("time_event_variant must be 'prose' or 'formula'")
        return self


@dataclass
class CurriculumStage:
    steps: int
    samples: int | tuple[int, int] = 256
    datasets_per_step: int = 8
    lr_schedule: dict[str, Any] = field(default_factory=lambda: {"kind": "constant", "value": 1e-3})
    encoder_frozen: bool = False

    def validate(self) -> "CurriculumStage":
        if self.steps < 1:
            raise ConfigError("stage steps must be >= 1")
        if isinstance(self.samples, (list, tuple)):
            lo, hi = _range(self.samples, "samples", 8)
            self.samples = (int(lo), int(hi))
        elif int(self.samples) < 8:
            raise ConfigError("samples per table must be >= 8")
        if self.datasets_per_step < 1:
            raise ConfigError("datasets_per_step must be >= 1")
        kind = self.lr_schedule.get("kind")
        keys = {"cosine": ("peak",), "polynomial": ("start", "end"), "constant": ("value",)}
        if kind not in keys:
            raise ConfigError(f"lr_schedule kind must be one of {sorted(keys)}")
        for k in keys[kind]:
            if float(self.lr_schedule.get(k, 0)) <= 0:
                raise ConfigError(f"lr_schedule {kind}: {k} must be > 0")
        return self


def desk_curriculum() -> list[CurriculumStage]:
    """Three-stage schedule scaled for a single desktop CPU."""
    return [
        CurriculumStage(2000, 256, 8, {"kind": "cosine", "peak": 2e-3, "warmup": 100}),
        CurriculumStage(400, (256, 2048), 8, {"kind": "polynomial", "start": 4e-4, "end": 1e-4, "power": 1.0}),
        CurriculumStage(100, (256, 2048), 8, {"kind": "constant", "value": 4e-5}, encoder_frozen=True),
    ]


@dataclass
class TrainConfig:
    alpha: float = 0.5
    sigma: float = 0.1
    weight_decay: float = 0.01
    betas: tuple[float, float] = (0.9, 0.95)
    eps: float = 1e-8
    grad_clip: float = 1.0
    context_share: tuple[float, float] = (0.3, 0.9)
    checkpoint_every: int = 250

    def validate(self) -> "TrainConfig":
        if not 0 <= self.alpha <= 1:
            raise ConfigError("alpha must lie in [0, 1]")
        if self.sigma <= 0:
            raise ConfigError("sigma must be > 0")
        lo, hi = _range(self.context_share, "context_share")
        if not (0 < lo and hi < 1):
            raise ConfigError("context_share must lie inside (0, 1)")
        self.context_share = (lo, hi)
        self.betas = tuple(float(b) for b in self.betas)
        return self


@dataclass
class CvPlan:
    n_folds: int = 5
    tuning_fraction: float = 0.10
    seed: int = 0

    def validate(self) -> "CvPlan":
        if self.n_folds < 2:
            raise ConfigError("n_folds must be >= 2")
        if not 0 <= self.tuning_fraction < 1:
            raise ConfigError("tuning_fraction must lie in [0, 1)")
        return self


@dataclass
class RunConfig:
    prior: PriorConfig = field(default_factory=PriorConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    stages: list[CurriculumStage] = field(default_factory=desk_curriculum)
    train: TrainConfig = field(default_factory=TrainConfig)
    cv: CvPlan = field(default_factory=CvPlan)

    def validate(self) -> "RunConfig":
        self.prior.validate()
        self.model.validate()
        self.train.validate()
        self.cv.validate()
        if not self.stages:
            raise ConfigError("at least one curriculum stage is required")
        for stage in self.stages:
            stage.validate()
        if self.prior.n_features[1] > self.model.max_features:
            raise ConfigError("prior n_features exceeds model max_features")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        def build(kind, values):
            if values is None:
                return kind()
            if not isinstance(values, dict):
                raise ConfigError(f"{kind.__name__} block must be an object")
            known = {f.name for f in fields(kind)}
            unknown = set(values) - known
            if unknown:
                raise ConfigError(f"unknown {kind.__name__} keys: {sorted(unknown)}")
            return kind(**values)

        unknown = set(data) - {"prior", "model", "stages", "train", "cv"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        stages = data.get("stages")
        cfg = cls(
            prior=build(PriorConfig, data.get("prior")),
            model=build(ModelConfig, data.get("model")),
            stages=desk_curriculum() if stages is None else [build(CurriculumStage, s) for s in stages],
            train=build(TrainConfig, data.get("train")),
            cv=build(CvPlan, data.get("cv")),
        )
        return cfg.validate()

    @classmethod
    def load(cls, path: str | Path | None) -> "RunConfig":
        if path is None:
            return cls().validate()
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)
