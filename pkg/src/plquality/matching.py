"""Minimum-cost assignment between student predictions and target instances.

The pairwise cost follows the familiar query-matching convention for
segmentation transformers: a weighted sum of class negative log-likelihood,
per-pixel binary cross-entropy, and dice loss. The solver wraps the linear
sum assignment routine from scipy and refines ties so that among all
minimum-cost assignments the lexicographically smallest one (by student
index, then target index) is returned deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .instances import BinaryMask, InstancePrediction, sigmoid, softmax
from .quality import UncertaintyMap

__all__ = [
    "PROB_EPS",
    "PseudoLabel",
    "CostWeights",
    "MatchResult",
    "match_cost",
    "hungarian",
]

# Clamp bound applied wherever a probability enters a log.
PROB_EPS = 1e-7


@dataclass(frozen=True)
class PseudoLabel:
    """A filtered, corrected instance used as training supervision.

    Carries the (possibly corrected) class id, the binarized teacher mask,
    and the per-pixel uncertainty map computed from the teacher logits.
    """

    class_id: int
    mask: BinaryMask
    uncertainty: UncertaintyMap

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError("class_id must be non-negative")
        if self.mask.shape != self.uncertainty.shape:
            raise ValueError(
                f"mask and uncertainty shapes differ: {self.mask.shape} vs {self.uncertainty.shape}"
            )


@dataclass(frozen=True)
class CostWeights:
    """Weights of the three matching cost terms."""

    class_weight: float = 1.0
    bce_weight: float = 1.0
    dice_weight: float = 1.0

    def __post_init__(self):
        for name in ("class_weight", "bce_weight", "dice_weight"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0.0:
                raise ValueError(f"{name} must be finite and non-negative")


@dataclass(frozen=True)
class MatchResult:
    """Injective assignment of student indices to target indices.

    ``pairs`` is sorted by student index; its length is min(Q, P).
    """

    pairs: tuple[tuple[int, int], ...]
    total_cost: float

    def __post_init__(self):
        students = [s for s, _ in self.pairs]
        targets = [t for _, t in self.pairs]
        if len(set(students)) != len(students) or len(set(targets)) != len(targets):
            raise ValueError("assignment must be injective")

    @property
    def assignment(self) -> dict[int, int]:
        return dict(self.pairs)


def soft_dice(probs: np.ndarray, target_bits: np.ndarray, smooth: float = 1.0) -> float:
    """Soft dice coefficient between a probability grid and a binary mask.

    The +1 smoothing keeps the value defined when both sides are empty.
    """
    target = target_bits.astype(np.float64)
    num = 2.0 * float((probs * target).sum()) + smooth
    den = float(probs.sum()) + float(target.sum()) + smooth
    return num / den


def match_cost(student: InstancePrediction, target, weights: CostWeights = CostWeights()) -> float:
    """Pairwise matching cost between a student prediction and a target.

    ``target`` is anything with ``class_id`` and ``mask`` attributes
    (a pseudo-label or a ground-truth instance). Probabilities are clamped
    to [PROB_EPS, 1 - PROB_EPS] before any log, so the cost is always finite.
    """
    target_mask = target.mask
    if student.mask_logits.shape != target_mask.shape:
        raise ValueError(
            f"mask shape mismatch: {student.mask_logits.shape} vs {target_mask.shape}"
        )
    if not 0 <= target.class_id < student.class_logits.num_classes:
        raise ValueError(f"target class {target.class_id} outside the student's vocabulary")

    class_prob = np.clip(softmax(student.class_logits)[target.class_id], PROB_EPS, 1.0 - PROB_EPS)
    probs = np.clip(sigmoid(student.mask_logits.values), PROB_EPS, 1.0 - PROB_EPS)
    bits = target_mask.bits.astype(np.float64)
    bce = float(-(bits * np.log(probs) + (1.0 - bits) * np.log(1.0 - probs)).mean())
    cost = weights.class_weight * -float(np.log(class_prob)) + weights.bce_weight * bce
    if weights.dice_weight > 0.0:
        cost += weights.dice_weight * (1.0 - soft_dice(probs, target_mask.bits))
    return cost


def _optimal_value(costs: np.ndarray) -> float:
    if costs.shape[0] == 0 or costs.shape[1] == 0:
        return 0.0
    rows, cols = linear_sum_assignment(costs)
    return float(costs[rows, cols].sum())


def hungarian(costs) -> MatchResult:
    """Minimum-total-cost assignment of min(Q, P) student-target pairs.

    Ties between equally cheap optimal assignments are broken by choosing
    the lexicographically smallest assignment: student rows are fixed in
    order, each to the smallest target column that still admits an optimal
    completion (leaving a row unmatched sorts after any column). The
    refinement re-solves subproblems, which is cheap at the matrix sizes
    this pipeline sees.
    """
    costs = np.asarray(costs, dtype=np.float64)
    if costs.ndim != 2:
        raise ValueError("cost matrix must be 2-D")
    if costs.size and not np.all(np.isfinite(costs)):
        raise ValueError("cost matrix entries must be finite")
    num_students, num_targets = costs.shape
    if num_students == 0 or num_targets == 0:
        return MatchResult(pairs=(), total_cost=0.0)

    target_value = _optimal_value(costs)
    tol = 1e-9 * max(1.0, abs(target_value))

    pairs: list[tuple[int, int]] = []
    available = list(range(num_targets))
    remaining = target_value
    for row in range(num_students):
        if not available:
            break
        matched_col = None
        for col in available:
            cols_rest = [c for c in available if c != col]
            candidate = costs[row, col] + _optimal_value(costs[row + 1 :, :][:, cols_rest])
            if abs(candidate - remaining) <= tol:
                matched_col = col
                remaining = candidate - costs[row, col]
                break
        if matched_col is not None:
            pairs.append((row, matched_col))
            available.remove(matched_col)
            continue
        rows_left_after = num_students - row - 1
        if rows_left_after < len(available):
            # Leaving this row unmatched would drop a required pair, yet no
            # column passed the tolerance check: numerical edge. Fall back
            # to the raw solver for the remaining block.
            sub = costs[row:, :][:, available]
            rows, cols = linear_sum_assignment(sub)
            for r, c in zip(rows, cols):
                pairs.append((row + int(r), available[int(c)]))
            pairs.sort()
            break
        # Otherwise the row is optimally left unmatched (more rows than
        # columns remain); an unmatched row sorts after any column.
    if len(pairs) < min(num_students, num_targets):
        # Tolerance checks starved the refinement of pairs; trust the raw
        # solver outright rather than return a short assignment.
        rows, cols = linear_sum_assignment(costs)
        pairs = sorted((int(r), int(c)) for r, c in zip(rows, cols))
    total = float(sum(costs[r, c] for r, c in pairs))
    return MatchResult(pairs=tuple(pairs), total_cost=total)
