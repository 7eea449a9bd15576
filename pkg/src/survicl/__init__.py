"""Synthetic survival prior, in-context survival model and evaluation tools."""

from .config import (
    FAMILIES,
    REGIMES,
    CurriculumStage,
    CvPlan,
    ModelConfig,
    PriorConfig,
    RunConfig,
    TrainConfig,
    desk_curriculum,
)
from .dataset import SurvivalDataset
from .hazards import BaselineFamily, normal_quantile
from .kernels import BACKEND
from .prior import generate_dataset

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "FAMILIES",
    "REGIMES",
    "BaselineFamily",
    "CurriculumStage",
    "CvPlan",
    "ModelConfig",
    "PriorConfig",
    "RunConfig",
    "SurvivalDataset",
    "TrainConfig",
    "desk_curriculum",
    "generate_dataset",
    "normal_quantile",
]
