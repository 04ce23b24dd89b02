"""Per-instance quality scores and per-pixel uncertainty.

Class quality is the maximum softmax probability of the class logits.
Mask quality is the mean foreground probability over pixels whose sigmoid
exceeds 0.5. The coupled score is their product; thresholding that single
product is the baseline behaviour the decoupled filter improves on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instances import InstancePrediction, MaskLogitGrid, sigmoid, softmax

__all__ = [
    "QualityScores",
    "UncertaintyMap",
    "class_quality",
    "mask_quality",
    "coupled_score",
    "uncertainty_map",
    "score_instance",
]


@dataclass(frozen=True)
class QualityScores:
    """Class quality c, mask quality m, and the coupled score s = c * m."""

    class_quality: float
    mask_quality: float
    coupled_score: float

    def __post_init__(self):
        if not 0.0 < self.class_quality <= 1.0:
            raise ValueError("class quality must lie in (0, 1]")
        if not 0.0 <= self.mask_quality <= 1.0:
            raise ValueError("mask quality must lie in [0, 1]")
        if abs(self.coupled_score - self.class_quality * self.mask_quality) > 1e-12:
            raise ValueError("coupled score must equal class quality * mask quality")

    @classmethod
    def from_parts(cls, c: float, m: float) -> "QualityScores":
        return cls(class_quality=c, mask_quality=m, coupled_score=c * m)


@dataclass(frozen=True)
class UncertaintyMap:
    """Per-pixel uncertainty in [0, 1], same shape as the source logit grid."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("uncertainty map must be a 2-D grid")
        if np.any(values < 0.0) or np.any(values > 1.0):
            raise ValueError("uncertainty values must lie in [0, 1]")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def class_quality(logits) -> float:
    """Maximum softmax probability of the class logits."""
    return float(np.max(softmax(logits)))


def mask_quality(mask_logits) -> float:
    """Mean foreground probability over pixels with sigmoid(q) > 0.5.

    Returns 0.0 when no pixel exceeds 0.5: an instance that predicts no
    confident foreground pixel should never pass a mask-quality threshold.
    """
    values = mask_logits.values if isinstance(mask_logits, MaskLogitGrid) else np.asarray(mask_logits, dtype=np.float64)
    probs = sigmoid(values)
    selected = probs > 0.5
    if not selected.any():
        return 0.0
    return float(probs[selected].mean())


def coupled_score(c: float, m: float) -> float:
    """Product of class quality and mask quality."""
    if not 0.0 <= c <= 1.0 or not 0.0 <= m <= 1.0:
        raise ValueError("quality factors must lie in [0, 1]")
    return c * m


def uncertainty_map(mask_logits) -> UncertaintyMap:
    """Per-pixel uncertainty u = 1 - 2 * |sigmoid(q) - 0.5|.

    Maximal (1.0) at logit 0 and symmetric in the sign of the logit, so it
    is available for every pixel of the grid, background included.
    """
    values = mask_logits.values if isinstance(mask_logits, MaskLogitGrid) else np.asarray(mask_logits, dtype=np.float64)
    probs = sigmoid(values)
    u = 1.0 - 2.0 * np.abs(probs - 0.5)
    return UncertaintyMap(u)


def score_instance(prediction: InstancePrediction) -> QualityScores:
    """Compute all three quality scores for one predicted instance."""
    c = class_quality(prediction.class_logits)
    m = mask_quality(prediction.mask_logits)
    return QualityScores.from_parts(c, m)
