"""Shared test helpers."""

import numpy as np
import pytest

from plquality.instances import BinaryMask, ClassLogits, InstancePrediction, MaskLogitGrid


def make_prediction(class_logits, mask_logits) -> InstancePrediction:
    return InstancePrediction(
        class_logits=ClassLogits(np.asarray(class_logits, dtype=float)),
        mask_logits=MaskLogitGrid(np.asarray(mask_logits, dtype=float)),
    )


def mask_from_pixels(height, width, pixels) -> BinaryMask:
    bits = np.zeros((height, width), dtype=bool)
    for row, col in pixels:
        bits[row, col] = True
    return BinaryMask(bits)


def prediction_with_scores(c_target, m_target, num_classes=4, shape=(4, 4)):
    """Build a prediction whose class/mask qualities hit the given targets.

    Class quality: two-class-dominant logits [L, 0, ...] with
    softmax max = c_target solved via L = log(c (N-1) / (1-c)).
    Mask quality: every pixel at the same logit q with sigmoid(q) = m_target,
    so the foreground mean is exactly m_target (requires m_target > 0.5).
    """
    if not 0.5 < m_target < 1.0:
        raise ValueError("m_target must be in (0.5, 1)")
    if not 1.0 / num_classes < c_target < 1.0:
        raise ValueError("c_target out of reachable range")
    class_logit = np.log(c_target * (num_classes - 1) / (1.0 - c_target))
    logits = np.zeros(num_classes)
    logits[0] = class_logit
    mask_logit = np.log(m_target / (1.0 - m_target))
    grid = np.full(shape, mask_logit)
    return make_prediction(logits, grid)


@pytest.fixture
def rng():
    return np.random.default_rng(4217)
