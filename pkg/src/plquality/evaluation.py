"""Evaluation analytics: error taxonomy, confusion matrix, score-vs-IoU, AP.

These are the desk-scale analyses used to study pseudo-label quality:
a five-way categorization of predicted instances against ground truth, a
class confusion matrix with a background slot, the per-instance table that
relates quality scores to actual mask IoU, and a simplified single-threshold
average precision as a stand-in for the full COCO protocol.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .instances import BinaryMask, GroundTruthInstance, InstancePrediction, binarize, mask_iou
from .quality import QualityScores, score_instance

__all__ = [
    "ErrorCategory",
    "Taxonomy",
    "ScoredMask",
    "ScoreIouRow",
    "ScoreIouTable",
    "categorize_errors",
    "confusion_matrix",
    "score_iou_table",
    "simplified_ap",
    "scored_masks_from_predictions",
]


class ErrorCategory(str, Enum):
    """Five-way categorization of one predicted instance."""

    CORRECT = "Cor"
    LOCALIZATION = "Loc"
    SIMILAR = "Sim"
    OTHER = "Oth"
    BACKGROUND = "BG"


@dataclass(frozen=True)
class Taxonomy:
    """Total mapping from class id to superclass id, for the Sim category."""

    superclass_of: Mapping[int, int]

    def __post_init__(self):
        object.__setattr__(self, "superclass_of", dict(self.superclass_of))

    @classmethod
    def identity(cls, num_classes: int) -> "Taxonomy":
        """Every class its own superclass (no two classes are 'similar')."""
        return cls({c: c for c in range(num_classes)})

    @classmethod
    def from_dict(cls, data: Mapping) -> "Taxonomy":
        return cls({int(k): int(v) for k, v in data.items()})

    def superclass(self, class_id: int) -> int:
        try:
            return self.superclass_of[class_id]
        except KeyError:
            raise KeyError(f"taxonomy has no superclass for class {class_id}") from None

    def covers(self, num_classes: int) -> bool:
        return all(c in self.superclass_of for c in range(num_classes))


@dataclass(frozen=True)
class ScoredMask:
    """A prediction reduced to what ranking-based evaluation needs."""

    score: float
    class_id: int
    mask: BinaryMask


def scored_masks_from_predictions(predictions: Sequence[InstancePrediction]) -> list[ScoredMask]:
    """Binarize and score predictions for AP-style evaluation."""
    out = []
    for pred in predictions:
        scores = score_instance(pred)
        out.append(
            ScoredMask(
                score=scores.coupled_score,
                class_id=int(np.argmax(pred.class_logits.values)),
                mask=binarize(pred.mask_logits),
            )
        )
    return out


def _categorize_one(
    class_id: int,
    mask: BinaryMask,
    ground_truth: Sequence[GroundTruthInstance],
    taxonomy: Taxonomy,
    iou_threshold: float,
) -> ErrorCategory:
    ious = [mask_iou(mask, gt.mask) for gt in ground_truth]
    superclass = taxonomy.superclass(class_id)
    # Precedence: Cor > Sim > Oth > Loc > BG. BG doubles as the fallback
    # (covers both the no-overlap case and small overlaps with a
    # different-class instance, which the four named rules do not reach).
    for gt, iou in zip(ground_truth, ious):
        if iou > iou_threshold and gt.class_id == class_id:
            return ErrorCategory.CORRECT
    for gt, iou in zip(ground_truth, ious):
        if iou > iou_threshold and gt.class_id != class_id and taxonomy.superclass(gt.class_id) == superclass:
            return ErrorCategory.SIMILAR
    for gt, iou in zip(ground_truth, ious):
        if iou > iou_threshold and gt.class_id != class_id:
            return ErrorCategory.OTHER
    for gt, iou in zip(ground_truth, ious):
        if 0.0 < iou <= iou_threshold and gt.class_id == class_id:
            return ErrorCategory.LOCALIZATION
    return ErrorCategory.BACKGROUND


def categorize_errors(
    predictions: Sequence[ScoredMask] | Sequence[InstancePrediction],
    ground_truth: Sequence[GroundTruthInstance],
    taxonomy: Taxonomy,
    iou_threshold: float = 0.5,
) -> tuple[list[ErrorCategory], Counter]:
    """Assign exactly one error category to every predicted instance.

    Accepts raw predictions (binarized internally) or pre-scored masks.
    Returns the per-instance categories in input order plus a histogram.
    """
    scored = _as_scored(predictions)
    classes = {gt.class_id for gt in ground_truth} | {s.class_id for s in scored}
    for class_id in classes:
        taxonomy.superclass(class_id)  # raises on missing entries
    categories = [
        _categorize_one(s.class_id, s.mask, ground_truth, taxonomy, iou_threshold) for s in scored
    ]
    histogram = Counter(categories)
    for category in ErrorCategory:
        histogram.setdefault(category, 0)
    return categories, histogram


def _as_scored(predictions) -> list[ScoredMask]:
    if predictions and isinstance(predictions[0], InstancePrediction):
        return scored_masks_from_predictions(predictions)
    return list(predictions)


def confusion_matrix(
    predictions: Sequence[ScoredMask] | Sequence[InstancePrediction],
    ground_truth: Sequence[GroundTruthInstance],
    num_classes: int,
) -> np.ndarray:
    """(N+1) x (N+1) counts; row = true class, column = predicted class.

    Predictions and ground truth are matched one-to-one greedily by
    descending IoU above 0.5. Each ground-truth instance contributes one
    event (its matched prediction's class, or the background column);
    each unmatched prediction contributes one background-row event.
    """
    scored = _as_scored(predictions)
    pairs = []
    for p_idx, pred in enumerate(scored):
        for g_idx, gt in enumerate(ground_truth):
            iou = mask_iou(pred.mask, gt.mask)
            if iou > 0.5:
                pairs.append((iou, p_idx, g_idx))
    pairs.sort(key=lambda item: (-item[0], item[1], item[2]))
    matched_pred: dict[int, int] = {}
    matched_gt: dict[int, int] = {}
    for _, p_idx, g_idx in pairs:
        if p_idx in matched_pred or g_idx in matched_gt:
            continue
        matched_pred[p_idx] = g_idx
        matched_gt[g_idx] = p_idx

    counts = np.zeros((num_classes + 1, num_classes + 1), dtype=np.int64)
    background = num_classes
    for g_idx, gt in enumerate(ground_truth):
        if g_idx in matched_gt:
            predicted = scored[matched_gt[g_idx]].class_id
            counts[gt.class_id, predicted] += 1
        else:
            counts[gt.class_id, background] += 1
    for p_idx, pred in enumerate(scored):
        if p_idx not in matched_pred:
            counts[background, pred.class_id] += 1
    return counts


@dataclass(frozen=True)
class ScoreIouRow:
    instance: int
    scores: QualityScores
    best_iou: float


@dataclass(frozen=True)
class ScoreIouTable:
    rows: tuple[ScoreIouRow, ...]
    correlations: dict[str, float]


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson correlation; NaN for degenerate (constant or empty) columns."""
    if x.size < 2 or float(np.std(x)) == 0.0 or float(np.std(y)) == 0.0:
        return float("nan")
    return float(np.corrcoef(x, y)[0, 1])


def score_iou_table(
    predictions: Sequence[InstancePrediction],
    ground_truth: Sequence[GroundTruthInstance],
) -> ScoreIouTable:
    """Per-instance quality scores against best mask IoU, plus correlations.

    This is the measurement behind the framework's premise: the coupled
    score need not correlate positively with actual mask IoU.
    """
    rows = []
    for index, pred in enumerate(predictions):
        scores = score_instance(pred)
        mask = binarize(pred.mask_logits)
        best = max((mask_iou(mask, gt.mask) for gt in ground_truth), default=0.0)
        rows.append(ScoreIouRow(instance=index, scores=scores, best_iou=best))
    iou = np.array([r.best_iou for r in rows])
    correlations = {
        "coupled_vs_iou": _pearson(np.array([r.scores.coupled_score for r in rows]), iou),
        "class_vs_iou": _pearson(np.array([r.scores.class_quality for r in rows]), iou),
        "mask_vs_iou": _pearson(np.array([r.scores.mask_quality for r in rows]), iou),
    }
    return ScoreIouTable(rows=tuple(rows), correlations=correlations)


def simplified_ap(
    predictions: Sequence[ScoredMask] | Sequence[InstancePrediction],
    ground_truth: Sequence[GroundTruthInstance],
    iou_threshold: float = 0.5,
) -> float:
    """101-point interpolated average precision at one IoU threshold.

    Predictions are ranked by descending score and matched greedily, each
    to the best still-unused ground-truth instance of its own class with
    IoU >= threshold (the COCO-style inclusive comparison). Returns 0.0
    when there is no ground truth.
    """
    scored = _as_scored(predictions)
    if not ground_truth:
        return 0.0
    order = sorted(range(len(scored)), key=lambda i: (-scored[i].score, i))
    used = set()
    flags = []
    for index in order:
        pred = scored[index]
        best_iou, best_gt = 0.0, None
        for g_idx, gt in enumerate(ground_truth):
            if g_idx in used or gt.class_id != pred.class_id:
                continue
            iou = mask_iou(pred.mask, gt.mask)
            if iou >= iou_threshold and iou > best_iou:
                best_iou, best_gt = iou, g_idx
        if best_gt is not None:
            used.add(best_gt)
            flags.append(True)
        else:
            flags.append(False)
    tp = np.cumsum(flags)
    ranks = np.arange(1, len(flags) + 1)
    precision = tp / ranks if len(flags) else np.array([])
    recall = tp / len(ground_truth) if len(flags) else np.array([])
    ap = 0.0
    for r in np.linspace(0.0, 1.0, 101):
        candidates = precision[recall >= r] if len(flags) else np.array([])
        ap += float(candidates.max()) if candidates.size else 0.0
    return ap / 101.0
