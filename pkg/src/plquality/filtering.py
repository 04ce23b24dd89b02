"""Pseudo-label selection: coupled single-threshold vs decoupled dual-threshold.

The coupled mode keeps an instance when c * m clears one threshold, which
lets a strong class score compensate for a weak mask (and vice versa). The
decoupled mode applies independent thresholds to class quality and mask
quality so neither can mask a failure of the other.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .instances import InstancePrediction
from .quality import QualityScores, score_instance

__all__ = [
    "FilterMode",
    "RejectReason",
    "FilterConfig",
    "FilteredSet",
    "filter_ddtf",
    "filter_coupled",
    "filter_predictions",
]

DEFAULT_MASK_THRESHOLD = 0.9
DEFAULT_CLASS_THRESHOLD = 0.85
DEFAULT_COUPLED_THRESHOLD = DEFAULT_MASK_THRESHOLD * DEFAULT_CLASS_THRESHOLD


class FilterMode(str, Enum):
    COUPLED = "coupled"
    DECOUPLED = "decoupled"


class RejectReason(str, Enum):
    CLASS_BELOW = "class_below"
    MASK_BELOW = "mask_below"
    SCORE_BELOW = "score_below"


@dataclass(frozen=True)
class FilterConfig:
    """Thresholds for either filtering mode.

    In decoupled mode only mask_threshold/class_threshold apply; in coupled
    mode only coupled_threshold applies.
    """

    mode: FilterMode = FilterMode.DECOUPLED
    mask_threshold: float = DEFAULT_MASK_THRESHOLD
    class_threshold: float = DEFAULT_CLASS_THRESHOLD
    coupled_threshold: float = DEFAULT_COUPLED_THRESHOLD

    def __post_init__(self):
        object.__setattr__(self, "mode", FilterMode(self.mode))
        for name in ("mask_threshold", "class_threshold", "coupled_threshold"):
            value = getattr(self, name)
            # Values above 1 are allowed and simply keep nothing; only
            # negative or non-finite thresholds are configuration errors.
            if not np.isfinite(value) or value < 0.0:
                raise ValueError(f"{name} must be finite and non-negative, got {value}")


@dataclass(frozen=True)
class FilteredSet:
    """Partition of the scored input into kept and rejected instances.

    Entries keep the original instance index; rejected entries record the
    first failing criterion (class checked before mask).
    """

    kept: tuple[tuple[int, QualityScores], ...] = field(default_factory=tuple)
    rejected: tuple[tuple[int, QualityScores, RejectReason], ...] = field(default_factory=tuple)

    @property
    def kept_indices(self) -> tuple[int, ...]:
        return tuple(index for index, _ in self.kept)

    @property
    def rejected_indices(self) -> tuple[int, ...]:
        return tuple(index for index, _, _ in self.rejected)


def _score_all(predictions: Sequence[InstancePrediction]) -> list[QualityScores]:
    return [score_instance(p) for p in predictions]


def filter_ddtf(predictions: Sequence[InstancePrediction], config: FilterConfig) -> FilteredSet:
    """Decoupled dual-threshold filtering.

    Keeps an instance iff class quality >= class_threshold AND mask quality
    >= mask_threshold (both inclusive). Rejection records the first failing
    criterion, class checked first, for deterministic reason labels.
    """
    if config.mode is not FilterMode.DECOUPLED:
        raise ValueError("filter_ddtf requires a decoupled-mode config")
    kept = []
    rejected = []
    for index, scores in enumerate(_score_all(predictions)):
        if scores.class_quality < config.class_threshold:
            rejected.append((index, scores, RejectReason.CLASS_BELOW))
        elif scores.mask_quality < config.mask_threshold:
            rejected.append((index, scores, RejectReason.MASK_BELOW))
        else:
            kept.append((index, scores))
    return FilteredSet(kept=tuple(kept), rejected=tuple(rejected))


def filter_coupled(predictions: Sequence[InstancePrediction], config: FilterConfig) -> FilteredSet:
    """Single-threshold baseline: keep iff c * m >= coupled_threshold."""
    if config.mode is not FilterMode.COUPLED:
        raise ValueError("filter_coupled requires a coupled-mode config")
    kept = []
    rejected = []
    for index, scores in enumerate(_score_all(predictions)):
        if scores.coupled_score >= config.coupled_threshold:
            kept.append((index, scores))
        else:
            rejected.append((index, scores, RejectReason.SCORE_BELOW))
    return FilteredSet(kept=tuple(kept), rejected=tuple(rejected))


def filter_predictions(predictions: Sequence[InstancePrediction], config: FilterConfig) -> FilteredSet:
    """Dispatch to the filtering mode selected by the config."""
    if config.mode is FilterMode.DECOUPLED:
        return filter_ddtf(predictions, config)
    return filter_coupled(predictions, config)
