"""Dynamic category correction via an external zero-shot classifier.

The teacher's class distribution for a filtered instance is blended with a
distribution from an external classifier under a cosine-decayed weight: the
external opinion dominates early in training (w = 0.5) and fades to nothing
by the final iteration (w = 0). The external classifier is a protocol, not a
model: responses may come from the configurable mock below, from a
precomputed file of distributions keyed by instance id, or from any live
service implementing :class:`ExternalClassifier`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

import numpy as np

__all__ = [
    "Distribution",
    "FusionState",
    "ClassifierQuery",
    "ExternalClassifier",
    "MockExternalClassifier",
    "PrecomputedClassifier",
    "fusion_weight",
    "fuse",
    "correct_category",
]


@dataclass(frozen=True)
class Distribution:
    """A probability distribution over the N foreground classes."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size < 1:
            raise ValueError("distribution must be a non-empty 1-D vector")
        if np.any(probs < 0.0):
            raise ValueError("distribution entries must be non-negative")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError(f"distribution must sum to 1 within 1e-9, got {probs.sum()!r}")
        probs = probs.copy()
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)

    @property
    def num_classes(self) -> int:
        return self.probs.size

    def argmax(self) -> int:
        """Most probable class; ties broken by lowest class index."""
        return int(np.argmax(self.probs))


@dataclass(frozen=True)
class FusionState:
    """Iteration counters that drive the fusion weight schedule."""

    it_cur: int
    it_max: int

    def __post_init__(self):
        if self.it_max < 1:
            raise ValueError("it_max must be positive")
        if not 0 <= self.it_cur <= self.it_max:
            raise ValueError("it_cur must lie in [0, it_max]")

    def weight(self) -> float:
        return fusion_weight(self)


def fusion_weight(state: FusionState) -> float:
    """Cosine-decayed blend weight: 0.25 * (cos(pi * it_cur / it_max) + 1).

    Decays monotonically from 0.5 at the first iteration to 0 at the last,
    shifting trust from the external classifier to the teacher as the
    teacher improves.
    """
    return 0.25 * (math.cos(math.pi * state.it_cur / state.it_max) + 1.0)


def fuse(teacher: Distribution, external: Distribution, w: float) -> Distribution:
    """Blend w * external + (1 - w) * teacher.

    Preserves normalization for any w in [0, 1]; the correction schedule
    only ever uses w in [0, 0.5].
    """
    if teacher.num_classes != external.num_classes:
        raise ValueError(
            f"distribution length mismatch: {teacher.num_classes} vs {external.num_classes}"
        )
    if not 0.0 <= w <= 1.0:
        raise ValueError("fusion weight must lie in [0, 1]")
    return Distribution(w * external.probs + (1.0 - w) * teacher.probs)


def correct_category(teacher: Distribution, external: Distribution, state: FusionState) -> int:
    """Class id with the highest fused probability (ties to lowest index)."""
    return fuse(teacher, external, fusion_weight(state)).argmax()


@dataclass(frozen=True)
class ClassifierQuery:
    """What the pipeline hands to an external classifier for one instance.

    ``instance_id`` keys precomputed lookups. ``patch_class`` stands in for
    the content of the masked image patch: in simulation the underlying
    ground-truth class is known, and the mock's accuracy parameter controls
    how reliably it is recognized. None means the patch shows no known
    object (e.g. a background-only mask).
    """

    instance_id: str
    num_classes: int
    patch_class: int | None = None


class ExternalClassifier(Protocol):
    def classify(self, query: ClassifierQuery) -> Distribution: ...


class MockExternalClassifier:
    """Configurable stand-in for a zero-shot vision-language classifier.

    Responds with a confusion-kernel row around the patch's true class:

        response = accuracy * onehot(true) + (1 - accuracy) * kernel_row(true)

    ``confusion`` selects the kernel: "residual" spreads the leftover mass
    uniformly over the other classes, "uniform" over all classes (so
    accuracy 0 yields the uniform distribution), or a custom row-stochastic
    NxN matrix. ``accuracy`` may be a scalar or a per-class vector. With
    ``sample_hard`` the perceived class is drawn from that row instead and
    the response is one-hot at it; given the same seed, responses are
    deterministic across runs. Queries with no known patch class get the
    uniform distribution.
    """

    def __init__(
        self,
        num_classes: int,
        accuracy: float | Sequence[float] = 0.9,
        confusion: str | np.ndarray = "residual",
        seed: int = 0,
        sample_hard: bool = False,
    ):
        if num_classes < 1:
            raise ValueError("num_classes must be positive")
        self.num_classes = num_classes
        acc = np.asarray(accuracy, dtype=np.float64)
        if acc.ndim == 0:
            acc = np.full(num_classes, float(acc))
        if acc.shape != (num_classes,) or np.any(acc < 0.0) or np.any(acc > 1.0):
            raise ValueError("accuracy must be a scalar or length-N vector in [0, 1]")
        self.accuracy = acc
        self.kernel = self._build_kernel(confusion, num_classes)
        self.sample_hard = sample_hard
        self._rng = np.random.default_rng(seed)

    @staticmethod
    def _build_kernel(confusion, n: int) -> np.ndarray:
        if isinstance(confusion, str):
            if confusion == "uniform":
                return np.full((n, n), 1.0 / n)
            if confusion == "residual":
                if n == 1:
                    return np.ones((1, 1))
                kernel = np.full((n, n), 1.0 / (n - 1))
                np.fill_diagonal(kernel, 0.0)
                return kernel
            raise ValueError(f"unknown confusion kernel name: {confusion!r}")
        kernel = np.asarray(confusion, dtype=np.float64)
        if kernel.shape != (n, n) or np.any(kernel < 0.0):
            raise ValueError("confusion kernel must be a non-negative NxN matrix")
        if not np.allclose(kernel.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("confusion kernel rows must sum to 1")
        return kernel

    def classify(self, query: ClassifierQuery) -> Distribution:
        if query.num_classes != self.num_classes:
            raise ValueError("query vocabulary size does not match the mock's")
        if query.patch_class is None:
            return Distribution(np.full(self.num_classes, 1.0 / self.num_classes))
        true = query.patch_class
        if not 0 <= true < self.num_classes:
            raise ValueError(f"unknown class id {true}")
        onehot = np.zeros(self.num_classes)
        onehot[true] = 1.0
        a = self.accuracy[true]
        row = a * onehot + (1.0 - a) * self.kernel[true]
        if self.sample_hard:
            perceived = int(self._rng.choice(self.num_classes, p=row / row.sum()))
            hard = np.zeros(self.num_classes)
            hard[perceived] = 1.0
            return Distribution(hard)
        return Distribution(row)


class PrecomputedClassifier:
    """Serves distributions from a mapping of instance id -> probability vector."""

    def __init__(self, table: Mapping[str, Sequence[float]]):
        self._table = {str(key): Distribution(np.asarray(value, dtype=np.float64)) for key, value in table.items()}

    @classmethod
    def from_json(cls, path) -> "PrecomputedClassifier":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def classify(self, query: ClassifierQuery) -> Distribution:
        try:
            dist = self._table[query.instance_id]
        except KeyError:
            raise KeyError(f"no precomputed distribution for instance id {query.instance_id!r}") from None
        if dist.num_classes != query.num_classes:
            raise ValueError(
                f"precomputed distribution for {query.instance_id!r} has length "
                f"{dist.num_classes}, expected {query.num_classes}"
            )
        return dist
