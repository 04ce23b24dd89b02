"""Core domain types for instance predictions and binary masks.

Everything downstream (quality scoring, filtering, matching, losses,
evaluation) is built on the types and elementary operations in this module:
stable sigmoid/softmax, mask IoU, logit binarization, and the column-major
run-length codec used for persistence.

All types are immutable after construction and all operations are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ClassLogits",
    "MaskLogitGrid",
    "InstancePrediction",
    "BinaryMask",
    "GroundTruthInstance",
    "sigmoid",
    "softmax",
    "mask_iou",
    "binarize",
    "rle_encode",
    "rle_decode",
]


def sigmoid(x):
    """Numerically stable logistic function, elementwise.

    Accepts a scalar or an array; returns a float for scalar input.
    """
    arr = np.asarray(x, dtype=np.float64)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ex = np.exp(arr[~pos])
    out[~pos] = ex / (1.0 + ex)
    return float(out[0]) if scalar else out.reshape(np.shape(x))


def _freeze(arr: np.ndarray) -> np.ndarray:
    # Copy before freezing so construction never mutates caller-owned arrays.
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ClassLogits:
    """Raw class logits of one predicted instance over N foreground classes."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("class logits must be a non-empty 1-D vector")
        if not np.all(np.isfinite(values)):
            raise ValueError("class logits must be finite")
        object.__setattr__(self, "values", _freeze(values))

    @property
    def num_classes(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class MaskLogitGrid:
    """Per-pixel mask logits of one predicted instance, row-major (H, W)."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError("mask logits must be a 2-D grid with H, W >= 1")
        if not np.all(np.isfinite(values)):
            raise ValueError("mask logits must be finite")
        object.__setattr__(self, "values", _freeze(values))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class InstancePrediction:
    """One predicted instance: class logits plus a mask logit grid."""

    class_logits: ClassLogits
    mask_logits: MaskLogitGrid


@dataclass(frozen=True)
class BinaryMask:
    """Boolean pixel raster, row-major (H, W)."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.dtype != np.bool_:
            bits = bits.astype(np.bool_)
        if bits.ndim != 2 or bits.shape[0] < 1 or bits.shape[1] < 1:
            raise ValueError("mask bits must be a 2-D grid with H, W >= 1")
        object.__setattr__(self, "bits", _freeze(bits))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    @property
    def area(self) -> int:
        """Number of foreground pixels."""
        return int(self.bits.sum())


@dataclass(frozen=True)
class GroundTruthInstance:
    """An annotated instance: class id plus a non-empty binary mask."""

    class_id: int
    mask: BinaryMask

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError("class_id must be non-negative")
        if self.mask.area == 0:
            raise ValueError("ground truth mask must have at least one foreground pixel")


def softmax(logits) -> np.ndarray:
    """Softmax with max-logit subtraction for numerical stability.

    Accepts a :class:`ClassLogits` or a plain 1-D array.
    """
    values = logits.values if isinstance(logits, ClassLogits) else np.asarray(logits, dtype=np.float64)
    if values.size == 0:
        raise ValueError("softmax of empty logits")
    shifted = values - values.max()
    exps = np.exp(shifted)
    return exps / exps.sum()


def _mask_bits(mask) -> np.ndarray:
    if isinstance(mask, BinaryMask):
        return mask.bits
    bits = np.asarray(mask)
    if bits.dtype != np.bool_:
        bits = bits.astype(np.bool_)
    return bits


def mask_iou(a, b) -> float:
    """Intersection-over-union of two binary masks of identical shape.

    Returns 0.0 when both masks are empty (avoids NaN propagation in
    evaluation loops). Raises on shape mismatch.
    """
    bits_a = _mask_bits(a)
    bits_b = _mask_bits(b)
    if bits_a.shape != bits_b.shape:
        raise ValueError(f"mask shape mismatch: {bits_a.shape} vs {bits_b.shape}")
    union = int(np.logical_or(bits_a, bits_b).sum())
    if union == 0:
        return 0.0
    inter = int(np.logical_and(bits_a, bits_b).sum())
    return inter / union


def binarize(mask_logits, threshold: float = 0.5) -> BinaryMask:
    """Threshold a mask logit grid at sigmoid(q) > threshold.

    The inequality is strict: a pixel whose foreground probability equals
    the threshold is background (logit 0 at the default threshold).
    """
    values = mask_logits.values if isinstance(mask_logits, MaskLogitGrid) else np.asarray(mask_logits, dtype=np.float64)
    return BinaryMask(sigmoid(values) > threshold)


def rle_encode(mask) -> list[int]:
    """Run-length encode a binary mask in column-major pixel order.

    Counts alternate background/foreground runs; the first count is the
    (possibly zero) leading background run. Column-major traversal keeps the
    encoding interoperable with the common COCO tooling convention even
    though masks live row-major in memory.
    """
    bits = _mask_bits(mask)
    flat = bits.ravel(order="F")
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    boundaries = np.concatenate(([0], changes, [flat.size]))
    counts = np.diff(boundaries).tolist()
    if flat[0]:
        counts.insert(0, 0)
    return [int(c) for c in counts]


def rle_decode(counts, height: int, width: int) -> BinaryMask:
    """Decode column-major run-length counts back into a binary mask.

    Raises when the counts do not sum to height * width.
    """
    counts = [int(c) for c in counts]
    if any(c < 0 for c in counts):
        raise ValueError("run-length counts must be non-negative")
    total = sum(counts)
    if total != height * width:
        raise ValueError(f"run-length counts sum to {total}, expected {height * width}")
    values = np.resize(np.array([False, True]), len(counts))
    flat = np.repeat(values, counts)
    return BinaryMask(flat.reshape((height, width), order="F"))
