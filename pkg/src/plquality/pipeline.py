"""From teacher predictions to training-ready pseudo-labels.

The ordering mirrors the framework: filter first (decoupled or coupled),
then correct the surviving categories with the external classifier, then
attach the per-pixel uncertainty computed from the teacher logits before
binarization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .correction import ClassifierQuery, Distribution, FusionState, fuse, fusion_weight
from .filtering import FilterConfig, FilteredSet, filter_predictions
from .instances import GroundTruthInstance, InstancePrediction, binarize, mask_iou, softmax
from .matching import PseudoLabel
from .quality import uncertainty_map

__all__ = ["CorrectionRecord", "PseudoLabelBatch", "derive_pseudo_labels"]


@dataclass(frozen=True)
class CorrectionRecord:
    """Diagnostics for one corrected instance: what changed and why."""

    index: int
    original_class: int
    corrected_class: int
    weight: float
    fused: tuple[float, ...]


@dataclass(frozen=True)
class PseudoLabelBatch:
    """Pseudo-labels for one image plus filtering/correction diagnostics."""

    labels: tuple[PseudoLabel, ...]
    kept_indices: tuple[int, ...]
    filtered: FilteredSet
    corrections: tuple[CorrectionRecord, ...]


def _patch_class(mask, ground_truth: Sequence[GroundTruthInstance]) -> int | None:
    """Class of the ground-truth instance best overlapping the mask, if any.

    Stands in for 'what the masked image patch actually shows' when handing
    a query to the external classifier in simulation.
    """
    best_iou = 0.0
    best_class = None
    for gt in ground_truth:
        iou = mask_iou(mask, gt.mask)
        if iou > best_iou:
            best_iou = iou
            best_class = gt.class_id
    return best_class


def derive_pseudo_labels(
    predictions: Sequence[InstancePrediction],
    filter_config: FilterConfig,
    *,
    classifier=None,
    fusion_state: FusionState | None = None,
    ground_truth: Sequence[GroundTruthInstance] | None = None,
    instance_id_prefix: str = "",
) -> PseudoLabelBatch:
    """Filter, optionally correct, and package teacher predictions.

    Correction runs only when both a classifier and a fusion state are
    given and applies only to instances that survived filtering. When
    ground truth is available (simulation), each query carries the class of
    the best-overlapping instance as the patch content; otherwise the
    classifier sees only the instance id, which suits precomputed lookups.
    """
    filtered = filter_predictions(predictions, filter_config)
    weight = fusion_weight(fusion_state) if fusion_state is not None else None
    labels = []
    corrections = []
    for index, _scores in filtered.kept:
        prediction = predictions[index]
        mask = binarize(prediction.mask_logits)
        uncertainty = uncertainty_map(prediction.mask_logits)
        teacher_dist = Distribution(softmax(prediction.class_logits))
        class_id = teacher_dist.argmax()
        if classifier is not None and fusion_state is not None:
            patch = _patch_class(mask, ground_truth) if ground_truth is not None else None
            query = ClassifierQuery(
                instance_id=f"{instance_id_prefix}{index}",
                num_classes=teacher_dist.num_classes,
                patch_class=patch,
            )
            external = classifier.classify(query)
            fused = fuse(teacher_dist, external, weight)
            corrected = fused.argmax()
            corrections.append(
                CorrectionRecord(
                    index=index,
                    original_class=class_id,
                    corrected_class=corrected,
                    weight=weight,
                    fused=tuple(float(p) for p in fused.probs),
                )
            )
            class_id = corrected
        labels.append(PseudoLabel(class_id=class_id, mask=mask, uncertainty=uncertainty))
    return PseudoLabelBatch(
        labels=tuple(labels),
        kept_indices=filtered.kept_indices,
        filtered=filtered,
        corrections=tuple(corrections),
    )
