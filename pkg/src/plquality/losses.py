"""Supervised and unsupervised loss terms with verified analytic gradients.

The unsupervised mask term is a per-pixel binary cross-entropy reweighted by
(1 - u), where u is the teacher's per-pixel uncertainty: pixels whose
pseudo-label is noisy contribute proportionally less to the loss and hence
to the parameter update. The analytic gradient of that term for a linear
per-pixel model is implemented here together with a central finite-difference
checker that verifies it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .instances import GroundTruthInstance, InstancePrediction, sigmoid, softmax
from .matching import PROB_EPS, CostWeights, MatchResult, PseudoLabel, hungarian, match_cost, soft_dice

__all__ = [
    "LossConfig",
    "SupervisedLoss",
    "LinearPixelModel",
    "supervised_loss",
    "pmua_mask_loss",
    "total_loss",
    "pmua_gradient",
    "finite_difference_check",
]


@dataclass(frozen=True)
class LossConfig:
    """Weights and switches shared by the loss terms.

    ``lambda_weight`` balances supervised against unsupervised loss.
    ``unsup_class_enabled`` controls whether the unsupervised loss includes
    a cross-entropy term on the corrected pseudo-label classes in addition
    to the uncertainty-weighted mask term.
    """

    lambda_weight: float = 1.0
    dice_enabled: bool = False
    cost_weights: CostWeights = CostWeights()
    unsup_class_enabled: bool = True

    def __post_init__(self):
        if not np.isfinite(self.lambda_weight) or self.lambda_weight < 0.0:
            raise ValueError("lambda_weight must be finite and non-negative")


@dataclass(frozen=True)
class SupervisedLoss:
    class_term: float
    mask_term: float

    @property
    def total(self) -> float:
        return self.class_term + self.mask_term


def _clamp(probs: np.ndarray) -> np.ndarray:
    return np.clip(probs, PROB_EPS, 1.0 - PROB_EPS)


def _pixel_bce(probs: np.ndarray, bits: np.ndarray) -> np.ndarray:
    target = bits.astype(np.float64)
    p = _clamp(probs)
    return -(target * np.log(p) + (1.0 - target) * np.log(1.0 - p))


def supervised_loss(
    students: Sequence[InstancePrediction],
    ground_truth: Sequence[GroundTruthInstance],
    config: LossConfig = LossConfig(),
) -> tuple[SupervisedLoss, MatchResult]:
    """Classification cross-entropy plus per-pixel mask BCE on labeled data.

    Students are matched to ground-truth instances by minimum-cost
    assignment; both terms are means over the matched pairs (and pixels for
    the mask term). The mask term optionally adds dice loss. Empty ground
    truth yields zero terms by convention.
    """
    if not ground_truth or not students:
        return SupervisedLoss(0.0, 0.0), MatchResult(pairs=(), total_cost=0.0)
    costs = np.array(
        [[match_cost(s, g, config.cost_weights) for g in ground_truth] for s in students]
    )
    match = hungarian(costs)
    class_terms = []
    mask_terms = []
    for student_idx, gt_idx in match.pairs:
        student = students[student_idx]
        target = ground_truth[gt_idx]
        class_prob = _clamp(softmax(student.class_logits))[target.class_id]
        class_terms.append(-float(np.log(class_prob)))
        probs = sigmoid(student.mask_logits.values)
        mask_term = float(_pixel_bce(probs, target.mask.bits).mean())
        if config.dice_enabled:
            mask_term += 1.0 - soft_dice(probs, target.mask.bits)
        mask_terms.append(mask_term)
    return SupervisedLoss(float(np.mean(class_terms)), float(np.mean(mask_terms))), match


def pmua_mask_loss(
    student_probs: Sequence[np.ndarray],
    matched: Mapping[int, PseudoLabel],
) -> float:
    """Uncertainty-weighted mask BCE over matched student instances.

    -1/(Q*H*W) * sum over matched pairs and pixels of
    (1 - u) * [M log t + (1 - M) log(1 - t)], where Q is the total number
    of student predictions. Unmatched students contribute zero; student
    probabilities are clamped before the logs. At u == 0 the term reduces
    to plain per-pixel BCE; at u == 1 the pixel is ignored entirely.
    """
    num_students = len(student_probs)
    if num_students == 0:
        return 0.0
    height, width = np.asarray(student_probs[0]).shape
    total = 0.0
    for student_idx, label in matched.items():
        if not 0 <= student_idx < num_students:
            raise ValueError(f"matched student index {student_idx} out of range")
        probs = np.asarray(student_probs[student_idx], dtype=np.float64)
        if probs.shape != label.mask.shape:
            raise ValueError(f"shape mismatch: {probs.shape} vs {label.mask.shape}")
        weight = 1.0 - label.uncertainty.values
        total += float((weight * _pixel_bce(probs, label.mask.bits)).sum())
    return total / (num_students * height * width)


def total_loss(l_sup: float, l_unsup: float, lambda_weight: float) -> float:
    """Supervised loss plus lambda times the unsupervised loss."""
    if lambda_weight < 0.0:
        raise ValueError("lambda must be non-negative")
    return l_sup + lambda_weight * l_unsup


@dataclass(frozen=True)
class LinearPixelModel:
    """Linear per-pixel mask model: logit(pixel) = theta . x(pixel).

    The per-pixel foreground probability is t = sigmoid(theta . x), so t
    stays in (0, 1) and the cross-entropy above is well defined. ``theta``
    has length D and pixel features have shape (H, W, D).
    """

    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        if theta.ndim != 1 or not np.all(np.isfinite(theta)):
            raise ValueError("theta must be a finite 1-D vector")
        theta = theta.copy()
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)

    def predict_logits(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.shape[-1] != self.theta.size:
            raise ValueError("feature dimension does not match theta")
        return features @ self.theta

    def predict_probs(self, features: np.ndarray) -> np.ndarray:
        return sigmoid(self.predict_logits(features))


def pmua_gradient(
    model: LinearPixelModel,
    features: Sequence[np.ndarray],
    matched: Mapping[int, PseudoLabel],
    num_instances: int | None = None,
) -> np.ndarray:
    """Analytic gradient of the uncertainty-weighted mask loss w.r.t. theta.

    For t = sigmoid(theta . x) the per-pixel contribution simplifies to
    (1 - u) * (t - M) * x, normalized by Q*H*W. The factor (1 - u) damps the
    update from uncertain pixels: at u == 1 the gradient vanishes, and
    raising u on any pixel never increases that pixel's contribution.
    Exact for probabilities away from the clamp bounds of the loss.
    """
    num_students = num_instances if num_instances is not None else len(features)
    if num_students == 0:
        return np.zeros_like(model.theta)
    shape = np.asarray(features[0]).shape
    height, width = shape[0], shape[1]
    grad = np.zeros_like(model.theta)
    for student_idx, label in matched.items():
        feats = np.asarray(features[student_idx], dtype=np.float64)
        probs = model.predict_probs(feats)
        weight = (1.0 - label.uncertainty.values) * (probs - label.mask.bits.astype(np.float64))
        grad += np.einsum("hw,hwd->d", weight, feats)
    return grad / (num_students * height * width)


def finite_difference_check(
    loss_fn: Callable[[np.ndarray], float],
    analytic: np.ndarray | Callable[[np.ndarray], np.ndarray],
    theta: np.ndarray,
    step: float = 1e-5,
) -> float:
    """Max relative disagreement between central differences and an analytic gradient.

    Per coordinate: |fd - an| / max(|fd|, |an|, 1e-8). The step is applied
    as given, and the result is reported honestly: an overly large step will
    show its truncation error rather than being masked.
    """
    theta = np.asarray(theta, dtype=np.float64)
    analytic_grad = analytic(theta) if callable(analytic) else np.asarray(analytic, dtype=np.float64)
    if analytic_grad.shape != theta.shape:
        raise ValueError("analytic gradient shape does not match theta")
    worst = 0.0
    for d in range(theta.size):
        bumped = theta.copy()
        bumped[d] = theta[d] + step
        f_plus = loss_fn(bumped)
        bumped[d] = theta[d] - step
        f_minus = loss_fn(bumped)
        fd = (f_plus - f_minus) / (2.0 * step)
        denom = max(abs(fd), abs(analytic_grad[d]), 1e-8)
        worst = max(worst, abs(fd - analytic_grad[d]) / denom)
    return worst
