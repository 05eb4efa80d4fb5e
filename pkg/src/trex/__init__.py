"""Preference-level attribution of behaviour clusters in multi-objective RL."""

from .core import (
    ExpertConfig,
    OfflineConfig,
    OfflineDataset,
    PipelineConfig,
    PreferenceVector,
    Trajectory,
    derive_seed,
    scalarize,
    validate_preference,
)

__version__ = "0.1.0"

__all__ = [
    "ExpertConfig",
    "OfflineConfig",
    "OfflineDataset",
    "PipelineConfig",
    "PreferenceVector",
    "Trajectory",
    "derive_seed",
    "scalarize",
    "validate_preference",
]
