"""Seeded synthetic segmentation scenes and controlled prediction noise.

Scenes are grids of per-pixel feature vectors with rectangle/ellipse
instances whose features carry a class-correlated signal, so a linear
per-pixel model can separate them. Noise channels stand in for weak/strong
augmentation: the same stddev perturbs scene features when producing a
training view and prediction logits when synthesizing corrupted teacher
output for controlled score-vs-IoU studies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instances import BinaryMask, ClassLogits, GroundTruthInstance, InstancePrediction, MaskLogitGrid

__all__ = [
    "NoiseChannel",
    "BenchmarkConfig",
    "SyntheticScene",
    "DatasetSplits",
    "generate_scene",
    "generate_dataset",
    "corrupt_predictions",
]

# Clean logit magnitudes used when synthesizing corrupted predictions.
MASK_LOGIT_SCALE = 4.0
CLASS_LOGIT_SCALE = 6.0


@dataclass(frozen=True)
class NoiseChannel:
    """Abstract augmentation strength: one channel per view.

    ``logit_noise`` is a Gaussian stddev applied to whatever real-valued
    signal the channel perturbs (scene features for training views,
    prediction logits in :func:`corrupt_predictions`). ``class_confusion``
    and ``instance_dropout`` only apply to synthesized predictions.
    """

    kind: str = "weak"
    logit_noise: float = 0.0
    class_confusion: float = 0.0
    instance_dropout: float = 0.0

    def __post_init__(self):
        if self.kind not in ("weak", "strong"):
            raise ValueError("channel kind must be 'weak' or 'strong'")
        if self.logit_noise < 0.0:
            raise ValueError("logit_noise must be non-negative")
        for name in ("class_confusion", "instance_dropout"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    def dominates(self, other: "NoiseChannel") -> bool:
        """True when every parameter is >= the other channel's."""
        return (
            self.logit_noise >= other.logit_noise
            and self.class_confusion >= other.class_confusion
            and self.instance_dropout >= other.instance_dropout
        )

    def perturb_features(self, features: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.logit_noise == 0.0:
            return features
        return features + rng.normal(0.0, self.logit_noise, size=features.shape)


@dataclass(frozen=True)
class BenchmarkConfig:
    """Everything needed to generate the seeded synthetic benchmark."""

    height: int = 32
    width: int = 32
    num_classes: int = 3
    class_skew: tuple[float, ...] = (0.5, 0.3, 0.2)
    instance_count: tuple[int, int] = (1, 3)
    shape_extent: tuple[int, int] = (3, 7)
    signal_strength: float = 3.0
    signal_range: tuple[float, float] = (0.4, 1.3)
    class_bleed: float = 0.5
    feature_noise: float = 0.5
    num_labeled: int = 4
    num_unlabeled: int = 16
    num_eval: int = 16
    weak_channel: NoiseChannel = NoiseChannel("weak", logit_noise=0.1)
    strong_channel: NoiseChannel = NoiseChannel("strong", logit_noise=1.0)
    seed: int = 0

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("grid dimensions must be positive")
        if self.num_classes < 1:
            raise ValueError("num_classes must be positive")
        skew = tuple(float(s) for s in self.class_skew)
        if len(skew) != self.num_classes or any(s < 0 for s in skew):
            raise ValueError("class_skew must be a non-negative vector of length num_classes")
        if abs(sum(skew) - 1.0) > 1e-9:
            raise ValueError("class_skew must sum to 1")
        object.__setattr__(self, "class_skew", skew)
        lo, hi = self.instance_count
        if not 1 <= lo <= hi:
            raise ValueError("instance_count must satisfy 1 <= lo <= hi")
        if hi > self.num_classes:
            raise ValueError("instance_count upper bound cannot exceed num_classes (one instance per class)")
        object.__setattr__(self, "instance_count", (int(lo), int(hi)))
        lo, hi = self.shape_extent
        if not 1 <= lo <= hi:
            raise ValueError("shape_extent must satisfy 1 <= lo <= hi")
        if 2 * hi + 1 > min(self.height, self.width):
            raise ValueError("shape_extent too large for the grid")
        object.__setattr__(self, "shape_extent", (int(lo), int(hi)))
        if self.signal_strength <= 0.0:
            raise ValueError("signal_strength must be positive")
        lo, hi = self.signal_range
        if not 0.0 < lo <= hi:
            raise ValueError("signal_range must satisfy 0 < lo <= hi")
        object.__setattr__(self, "signal_range", (float(lo), float(hi)))
        if not 0.0 <= self.class_bleed < 1.0:
            raise ValueError("class_bleed must lie in [0, 1)")
        if self.feature_noise < 0.0:
            raise ValueError("feature_noise must be non-negative")
        for name in ("num_labeled", "num_unlabeled", "num_eval"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.strong_channel.dominates(self.weak_channel):
            raise ValueError("strong channel parameters must be >= weak channel parameters")

    @property
    def feature_dim(self) -> int:
        # One signal dim per class, one distractor noise dim, one bias dim.
        return self.num_classes + 2

    def to_dict(self) -> dict:
        return {
            "height": self.height,
            "width": self.width,
            "num_classes": self.num_classes,
            "class_skew": list(self.class_skew),
            "instance_count": list(self.instance_count),
            "shape_extent": list(self.shape_extent),
            "signal_strength": self.signal_strength,
            "signal_range": list(self.signal_range),
            "class_bleed": self.class_bleed,
            "feature_noise": self.feature_noise,
            "num_labeled": self.num_labeled,
            "num_unlabeled": self.num_unlabeled,
            "num_eval": self.num_eval,
            "weak_channel": _channel_dict(self.weak_channel),
            "strong_channel": _channel_dict(self.strong_channel),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BenchmarkConfig":
        kwargs = dict(data)
        for key in ("class_skew", "instance_count", "shape_extent", "signal_range"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        for key in ("weak_channel", "strong_channel"):
            if key in kwargs and isinstance(kwargs[key], dict):
                kwargs[key] = NoiseChannel(**kwargs[key])
        return cls(**kwargs)


def _channel_dict(channel: NoiseChannel) -> dict:
    return {
        "kind": channel.kind,
        "logit_noise": channel.logit_noise,
        "class_confusion": channel.class_confusion,
        "instance_dropout": channel.instance_dropout,
    }


@dataclass(frozen=True)
class SyntheticScene:
    """One generated scene: feature grid plus ground-truth instances."""

    scene_id: int
    seed: int
    num_classes: int
    features: np.ndarray
    instances: tuple[GroundTruthInstance, ...]

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 3:
            raise ValueError("features must have shape (H, W, D)")
        if not np.all(np.isfinite(features)):
            raise ValueError("features must be finite")
        features = features.copy()
        features.flags.writeable = False
        object.__setattr__(self, "features", features)
        for inst in self.instances:
            if inst.class_id >= self.num_classes:
                raise ValueError("instance class outside the scene vocabulary")
            if inst.mask.shape != features.shape[:2]:
                raise ValueError("instance mask shape does not match the feature grid")

    @property
    def shape(self) -> tuple[int, int]:
        return self.features.shape[:2]

    def semantic_map(self) -> np.ndarray:
        """Per-pixel class labels; background is num_classes."""
        labels = np.full(self.shape, self.num_classes, dtype=np.int64)
        for inst in self.instances:
            labels[inst.mask.bits] = inst.class_id
        return labels

    def class_mask(self, class_id: int) -> np.ndarray:
        bits = np.zeros(self.shape, dtype=bool)
        for inst in self.instances:
            if inst.class_id == class_id:
                bits |= inst.mask.bits
        return bits


@dataclass(frozen=True)
class DatasetSplits:
    labeled: tuple[SyntheticScene, ...]
    unlabeled: tuple[SyntheticScene, ...]
    evaluation: tuple[SyntheticScene, ...]


def _rasterize_shape(rng: np.random.Generator, config: BenchmarkConfig) -> np.ndarray:
    lo, hi = config.shape_extent
    half_h = int(rng.integers(lo, hi + 1))
    half_w = int(rng.integers(lo, hi + 1))
    cy = int(rng.integers(half_h, config.height - half_h))
    cx = int(rng.integers(half_w, config.width - half_w))
    kind = rng.integers(0, 2)
    ys = np.arange(config.height)[:, None]
    xs = np.arange(config.width)[None, :]
    if kind == 0:
        return (np.abs(ys - cy) <= half_h) & (np.abs(xs - cx) <= half_w)
    return ((ys - cy) / half_h) ** 2 + ((xs - cx) / half_w) ** 2 <= 1.0


def generate_scene(seed: int, config: BenchmarkConfig, scene_id: int = 0) -> SyntheticScene:
    """Deterministically generate one scene from its seed.

    Instances are non-overlapping rectangles or ellipses with distinct
    classes sampled from the configured skew. Pixel features are Gaussian
    noise plus a class signal on the instance's own feature dim (and a
    bleed of it on the next class's dim, which is what makes categories
    confusable); the last dim is a constant bias of 1.
    """
    rng = np.random.default_rng(seed)
    lo, hi = config.instance_count
    count = int(rng.integers(lo, hi + 1))
    classes = rng.choice(config.num_classes, size=count, replace=False, p=np.array(config.class_skew))

    occupied = np.zeros((config.height, config.width), dtype=bool)
    instances = []
    for class_id in classes:
        for _ in range(200):
            bits = _rasterize_shape(rng, config)
            if not (bits & occupied).any():
                occupied |= bits
                instances.append(GroundTruthInstance(class_id=int(class_id), mask=BinaryMask(bits)))
                break
        # If no placement fits after 200 attempts the instance is skipped;
        # at the default extents this is effectively unreachable.

    features = rng.normal(0.0, config.feature_noise, size=(config.height, config.width, config.feature_dim))
    features[..., -1] = 1.0  # clean bias dim
    for inst in instances:
        # A per-instance signal scale makes some instances intrinsically
        # hard: their masks come out noisier and their classes more
        # confusable, which is what spreads quality scores against IoU.
        scale = float(rng.uniform(*config.signal_range)) * config.signal_strength
        features[inst.mask.bits, inst.class_id] += scale
        if config.class_bleed > 0.0 and config.num_classes > 1:
            neighbor = (inst.class_id + 1) % config.num_classes
            features[inst.mask.bits, neighbor] += scale * config.class_bleed
    return SyntheticScene(
        scene_id=scene_id,
        seed=seed,
        num_classes=config.num_classes,
        features=features,
        instances=tuple(instances),
    )


def generate_dataset(config: BenchmarkConfig) -> DatasetSplits:
    """Generate the labeled/unlabeled/evaluation splits for one benchmark seed.

    Scene seeds derive from (config.seed, split offset, index), so every
    split is deterministic and disjoint in its randomness.
    """
    def split(offset: int, count: int) -> tuple[SyntheticScene, ...]:
        scenes = []
        for index in range(count):
            seed_seq = np.random.SeedSequence([config.seed, offset, index])
            scene_seed = int(seed_seq.generate_state(1)[0])
            scenes.append(generate_scene(scene_seed, config, scene_id=offset * 100000 + index))
        return tuple(scenes)

    return DatasetSplits(
        labeled=split(0, config.num_labeled),
        unlabeled=split(1, config.num_unlabeled),
        evaluation=split(2, config.num_eval),
    )


def corrupt_predictions(
    scene: SyntheticScene,
    channel: NoiseChannel,
    seed: int,
    mask_logit_scale: float = MASK_LOGIT_SCALE,
    class_logit_scale: float = CLASS_LOGIT_SCALE,
) -> list[InstancePrediction]:
    """Synthesize noisy teacher-style predictions directly from ground truth.

    Each surviving instance becomes one prediction whose clean logits are
    +/-mask_logit_scale on the mask and class_logit_scale at the (possibly
    confused) class, both perturbed by the channel's Gaussian logit noise.
    Enables controlled score-vs-IoU studies without training a model.
    """
    rng = np.random.default_rng(seed)
    height, width = scene.shape
    predictions = []
    for inst in scene.instances:
        if rng.random() < channel.instance_dropout:
            continue
        class_id = inst.class_id
        if channel.class_confusion > 0.0 and rng.random() < channel.class_confusion:
            others = [c for c in range(scene.num_classes) if c != class_id]
            if others:
                class_id = int(rng.choice(others))
        class_logits = np.zeros(scene.num_classes)
        class_logits[class_id] = class_logit_scale
        if channel.logit_noise > 0.0:
            class_logits = class_logits + rng.normal(0.0, channel.logit_noise, size=scene.num_classes)
        mask_logits = np.where(inst.mask.bits, mask_logit_scale, -mask_logit_scale).astype(np.float64)
        if channel.logit_noise > 0.0:
            mask_logits = mask_logits + rng.normal(0.0, channel.logit_noise, size=(height, width))
        predictions.append(
            InstancePrediction(
                class_logits=ClassLogits(class_logits),
                mask_logits=MaskLogitGrid(mask_logits),
            )
        )
    return predictions
