"""External file formats: prediction/scene JSON with f32 sidecars, CSV, JSONL.

Mask logits and feature grids are persisted as sidecar binaries of 32-bit
little-endian floats (row-major), referenced by relative path from the JSON,
because JSON arrays of H*W floats are impractically large. Every JSON
document carries "format_version": 1. CSV output uses '.' decimals, '\\n'
line endings, a header row, and 9-significant-digit float formatting so
golden files reproduce byte for byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .instances import (
    ClassLogits,
    GroundTruthInstance,
    InstancePrediction,
    MaskLogitGrid,
    rle_decode,
    rle_encode,
)
from .synthetic import SyntheticScene

__all__ = [
    "FORMAT_VERSION",
    "ValidationError",
    "PredictionSet",
    "write_predictions",
    "read_predictions",
    "write_scene",
    "read_scene",
    "format_float",
    "write_csv",
    "write_jsonl",
]

FORMAT_VERSION = 1


class ValidationError(ValueError):
    """A malformed input file, reported with its path and offending field."""

    def __init__(self, path, field: str, message: str):
        self.path = str(path)
        self.field = field
        super().__init__(f"{self.path}: {field}: {message}")


@dataclass(frozen=True)
class PredictionSet:
    """All predicted instances of one image, plus the vocabulary."""

    image_id: str
    height: int
    width: int
    num_classes: int
    class_names: tuple[str, ...]
    instances: tuple[InstancePrediction, ...]

    def __post_init__(self):
        if len(self.class_names) != self.num_classes:
            raise ValueError("class_names length must equal num_classes")
        for inst in self.instances:
            if inst.mask_logits.shape != (self.height, self.width):
                raise ValueError("all instances must share the file's (height, width)")
            if inst.class_logits.num_classes != self.num_classes:
                raise ValueError("all instances must share the file's num_classes")


def _write_sidecar(path: Path, values: np.ndarray) -> None:
    path.write_bytes(values.astype("<f4").tobytes())


def _read_sidecar(path: Path, count: int, json_path, field: str) -> np.ndarray:
    if not path.exists():
        raise ValidationError(json_path, field, f"sidecar file not found: {path.name}")
    data = path.read_bytes()
    if len(data) != 4 * count:
        raise ValidationError(
            json_path, field, f"sidecar {path.name} holds {len(data)} bytes, expected {4 * count}"
        )
    return np.frombuffer(data, dtype="<f4").astype(np.float64)


def write_predictions(pred_set: PredictionSet, json_path) -> None:
    """Write a prediction file plus one mask-logit sidecar per instance."""
    json_path = Path(json_path)
    stem = json_path.stem
    instances = []
    for index, inst in enumerate(pred_set.instances):
        sidecar = f"{stem}_inst{index:04d}.f32"
        _write_sidecar(json_path.parent / sidecar, inst.mask_logits.values.ravel())
        instances.append(
            {
                "class_logits": [float(x) for x in inst.class_logits.values],
                "mask_logits": {"sidecar": sidecar},
            }
        )
    document = {
        "format_version": FORMAT_VERSION,
        "image_id": pred_set.image_id,
        "height": pred_set.height,
        "width": pred_set.width,
        "num_classes": pred_set.num_classes,
        "class_names": list(pred_set.class_names),
        "instances": instances,
    }
    json_path.write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")


def _require(document: dict, field: str, kind, path) -> object:
    if field not in document:
        raise ValidationError(path, field, "missing required field")
    value = document[field]
    if kind is int and isinstance(value, bool):
        raise ValidationError(path, field, "expected an integer")
    if not isinstance(value, kind):
        raise ValidationError(path, field, f"expected {kind.__name__}, got {type(value).__name__}")
    return value


def _logits_from_degenerate(entry: dict, height: int, width: int, path, field: str) -> np.ndarray:
    """Reconstruct mask logits from the rle + confidence degenerate form.

    Foreground pixels get +logit(confidence), background pixels the
    negative, so binarization recovers the mask and the mask quality equals
    the stated confidence.
    """
    confidence = entry.get("confidence")
    if not isinstance(confidence, (int, float)) or not 0.5 < confidence < 1.0:
        raise ValidationError(path, f"{field}.confidence", "must be a number in (0.5, 1)")
    try:
        mask = rle_decode(entry["rle"], height, width)
    except ValueError as exc:
        raise ValidationError(path, f"{field}.rle", str(exc)) from None
    magnitude = math.log(confidence / (1.0 - confidence))
    return np.where(mask.bits, magnitude, -magnitude)


def read_predictions(json_path) -> PredictionSet:
    """Read a prediction file, validating structure and sidecar sizes."""
    json_path = Path(json_path)
    if not json_path.exists():
        raise ValidationError(json_path, "-", "file not found")
    try:
        document = json.loads(json_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(json_path, "-", f"invalid JSON: {exc}") from None
    if not isinstance(document, dict):
        raise ValidationError(json_path, "-", "top level must be an object")
    version = _require(document, "format_version", int, json_path)
    if version != FORMAT_VERSION:
        raise ValidationError(json_path, "format_version", f"unsupported version {version}")
    image_id = _require(document, "image_id", str, json_path)
    height = _require(document, "height", int, json_path)
    width = _require(document, "width", int, json_path)
    num_classes = _require(document, "num_classes", int, json_path)
    class_names = _require(document, "class_names", list, json_path)
    entries = _require(document, "instances", list, json_path)
    if len(class_names) != num_classes:
        raise ValidationError(json_path, "class_names", "length must equal num_classes")

    instances = []
    for index, entry in enumerate(entries):
        field = f"instances[{index}]"
        if not isinstance(entry, dict):
            raise ValidationError(json_path, field, "must be an object")
        logits = entry.get("class_logits")
        if not isinstance(logits, list) or len(logits) != num_classes:
            raise ValidationError(json_path, f"{field}.class_logits", f"must be a list of {num_classes} numbers")
        mask_entry = entry.get("mask_logits")
        if isinstance(mask_entry, dict) and "sidecar" in mask_entry:
            flat = _read_sidecar(
                json_path.parent / str(mask_entry["sidecar"]), height * width, json_path, f"{field}.mask_logits"
            )
            grid = flat.reshape(height, width)
        elif isinstance(mask_entry, dict) and "rle" in mask_entry:
            grid = _logits_from_degenerate(mask_entry, height, width, json_path, f"{field}.mask_logits")
        else:
            raise ValidationError(
                json_path, f"{field}.mask_logits", "must carry either a 'sidecar' reference or 'rle' + 'confidence'"
            )
        try:
            instances.append(
                InstancePrediction(
                    class_logits=ClassLogits(np.asarray(logits, dtype=np.float64)),
                    mask_logits=MaskLogitGrid(grid),
                )
            )
        except ValueError as exc:
            raise ValidationError(json_path, field, str(exc)) from None
    try:
        return PredictionSet(
            image_id=image_id,
            height=height,
            width=width,
            num_classes=num_classes,
            class_names=tuple(str(n) for n in class_names),
            instances=tuple(instances),
        )
    except ValueError as exc:
        raise ValidationError(json_path, "instances", str(exc)) from None


def write_scene(scene: SyntheticScene, json_path) -> None:
    """Write a scene: ground truth as RLE, features as an f32 sidecar."""
    json_path = Path(json_path)
    sidecar = f"{json_path.stem}_features.f32"
    _write_sidecar(json_path.parent / sidecar, scene.features.ravel())
    height, width, dim = scene.features.shape
    document = {
        "format_version": FORMAT_VERSION,
        "scene_id": scene.scene_id,
        "seed": scene.seed,
        "height": height,
        "width": width,
        "feature_dim": dim,
        "num_classes": scene.num_classes,
        "features": {"sidecar": sidecar},
        "instances": [
            {"class_id": inst.class_id, "rle": rle_encode(inst.mask)} for inst in scene.instances
        ],
    }
    json_path.write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")


def read_scene(json_path) -> SyntheticScene:
    json_path = Path(json_path)
    if not json_path.exists():
        raise ValidationError(json_path, "-", "file not found")
    try:
        document = json.loads(json_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(json_path, "-", f"invalid JSON: {exc}") from None
    version = _require(document, "format_version", int, json_path)
    if version != FORMAT_VERSION:
        raise ValidationError(json_path, "format_version", f"unsupported version {version}")
    height = _require(document, "height", int, json_path)
    width = _require(document, "width", int, json_path)
    dim = _require(document, "feature_dim", int, json_path)
    num_classes = _require(document, "num_classes", int, json_path)
    features_entry = _require(document, "features", dict, json_path)
    flat = _read_sidecar(
        json_path.parent / str(features_entry.get("sidecar")), height * width * dim, json_path, "features"
    )
    instances = []
    for index, entry in enumerate(_require(document, "instances", list, json_path)):
        field = f"instances[{index}]"
        try:
            mask = rle_decode(entry["rle"], height, width)
            instances.append(GroundTruthInstance(class_id=int(entry["class_id"]), mask=mask))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(json_path, field, str(exc)) from None
    try:
        return SyntheticScene(
            scene_id=int(document.get("scene_id", 0)),
            seed=int(document.get("seed", 0)),
            num_classes=num_classes,
            features=flat.reshape(height, width, dim),
            instances=tuple(instances),
        )
    except ValueError as exc:
        raise ValidationError(json_path, "instances", str(exc)) from None


def format_float(value: float) -> str:
    """9-significant-digit formatting; 'nan' sentinel for degenerate values."""
    if isinstance(value, float) and math.isnan(value):
        return "nan"
    return f"{value:.9g}"


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """CSV with '.' decimals, '\\n' endings, and deterministic formatting."""
    lines = [",".join(header)]
    for row in rows:
        cells = [format_float(cell) if isinstance(cell, float) else str(cell) for cell in row]
        lines.append(",".join(cells))
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))


def write_jsonl(path, records: Iterable[dict]) -> None:
    """One compact JSON object per line."""
    lines = [json.dumps(record, separators=(",", ":")) for record in records]
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
