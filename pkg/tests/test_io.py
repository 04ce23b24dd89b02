"""File format round-trips and validation errors."""

import json
from pathlib import Path

import numpy as np
import pytest

from plquality.instances import binarize, rle_encode
from plquality.io import (
    PredictionSet,
    ValidationError,
    format_float,
    read_predictions,
    read_scene,
    write_csv,
    write_jsonl,
    write_predictions,
    write_scene,
)
from plquality.quality import mask_quality
from plquality.synthetic import BenchmarkConfig, NoiseChannel, corrupt_predictions, generate_scene

from conftest import make_prediction

FIXTURES = Path(__file__).parent / "fixtures"


def sample_pred_set(seed=11, noise=1.5) -> PredictionSet:
    config = BenchmarkConfig(height=16, width=16, shape_extent=(2, 4), seed=0)
    scene = generate_scene(seed, config)
    preds = corrupt_predictions(scene, NoiseChannel("strong", logit_noise=noise), seed=seed)
    return PredictionSet(
        image_id=f"scene_{seed}",
        height=16,
        width=16,
        num_classes=config.num_classes,
        class_names=tuple(f"class_{c}" for c in range(config.num_classes)),
        instances=tuple(preds),
    )


class TestPredictionRoundTrip:
    def test_write_read_identity(self, tmp_path):
        # Sidecars quantize to float32, so write the file, read it back,
        # and confirm a second write/read cycle is an exact fixed point.
        original = sample_pred_set()
        path_a = tmp_path / "preds_a.json"
        write_predictions(original, path_a)
        first = read_predictions(path_a)
        path_b = tmp_path / "preds_b.json"
        write_predictions(first, path_b)
        second = read_predictions(path_b)
        assert first.image_id == second.image_id == original.image_id
        assert len(first.instances) == len(original.instances)
        for a, b in zip(first.instances, second.instances):
            np.testing.assert_array_equal(a.class_logits.values, b.class_logits.values)
            np.testing.assert_array_equal(a.mask_logits.values, b.mask_logits.values)

    def test_float32_quantization_bounded(self, tmp_path):
        original = sample_pred_set()
        path = tmp_path / "preds.json"
        write_predictions(original, path)
        restored = read_predictions(path)
        for a, b in zip(original.instances, restored.instances):
            np.testing.assert_allclose(a.mask_logits.values, b.mask_logits.values, rtol=1e-6, atol=1e-6)

    def test_degenerate_rle_confidence_form(self, tmp_path):
        # An instance given as a binary mask + confidence reconstructs
        # logits of +/- logit(confidence): binarization recovers the mask
        # and the mask quality equals the confidence.
        pred = make_prediction([3.0, 0.0], np.where(np.eye(4, dtype=bool), 2.0, -2.0))
        mask = binarize(pred.mask_logits)
        document = {
            "format_version": 1,
            "image_id": "degenerate",
            "height": 4,
            "width": 4,
            "num_classes": 2,
            "class_names": ["a", "b"],
            "instances": [
                {
                    "class_logits": [3.0, 0.0],
                    "mask_logits": {"rle": rle_encode(mask), "confidence": 0.95},
                }
            ],
        }
        path = tmp_path / "degenerate.json"
        path.write_text(json.dumps(document))
        restored = read_predictions(path)
        inst = restored.instances[0]
        assert np.array_equal(binarize(inst.mask_logits).bits, mask.bits)
        assert mask_quality(inst.mask_logits) == pytest.approx(0.95, abs=1e-9)

    def test_missing_field_reports_path_and_field(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text(json.dumps({"format_version": 1, "image_id": "x"}))
        with pytest.raises(ValidationError) as excinfo:
            read_predictions(path)
        assert "height" in str(excinfo.value)
        assert str(path) in str(excinfo.value)

    def test_sidecar_size_mismatch(self, tmp_path):
        pred_set = sample_pred_set()
        path = tmp_path / "preds.json"
        write_predictions(pred_set, path)
        sidecar = next(tmp_path.glob("*.f32"))
        sidecar.write_bytes(sidecar.read_bytes()[:-4])
        with pytest.raises(ValidationError) as excinfo:
            read_predictions(path)
        assert "bytes" in str(excinfo.value)

    def test_bad_confidence_rejected(self, tmp_path):
        document = {
            "format_version": 1,
            "image_id": "x",
            "height": 1,
            "width": 1,
            "num_classes": 1,
            "class_names": ["a"],
            "instances": [{"class_logits": [0.0], "mask_logits": {"rle": [1], "confidence": 0.4}}],
        }
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(document))
        with pytest.raises(ValidationError) as excinfo:
            read_predictions(path)
        assert "confidence" in str(excinfo.value)

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "v2.json"
        path.write_text(json.dumps({"format_version": 2}))
        with pytest.raises(ValidationError):
            read_predictions(path)

    def test_golden_fixture_reads(self):
        pred_set = read_predictions(FIXTURES / "golden_predictions.json")
        assert pred_set.image_id == "golden_scene"
        assert len(pred_set.instances) == 3


class TestSceneRoundTrip:
    def test_write_read_identity(self, tmp_path):
        config = BenchmarkConfig(height=16, width=16, shape_extent=(2, 4))
        scene = generate_scene(9, config, scene_id=4)
        path = tmp_path / "scene.json"
        write_scene(scene, path)
        restored = read_scene(path)
        assert restored.scene_id == 4
        assert restored.num_classes == scene.num_classes
        np.testing.assert_allclose(restored.features, scene.features, rtol=1e-6, atol=1e-6)
        assert len(restored.instances) == len(scene.instances)
        for a, b in zip(scene.instances, restored.instances):
            assert a.class_id == b.class_id
            assert np.array_equal(a.mask.bits, b.mask.bits)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError):
            read_scene(tmp_path / "missing.json")


class TestCsvAndJsonl:
    def test_format_float_nine_significant_digits(self):
        assert format_float(0.12345678912345) == "0.123456789"
        assert format_float(1.0) == "1"
        assert format_float(float("nan")) == "nan"

    def test_csv_deterministic_bytes(self, tmp_path):
        rows = [(0, 0.5, float("nan")), (1, 1 / 3, 2.0)]
        paths = []
        for name in ("a.csv", "b.csv"):
            path = tmp_path / name
            write_csv(path, ["i", "x", "y"], rows)
            paths.append(path.read_bytes())
        assert paths[0] == paths[1]
        text = paths[0].decode()
        assert text == "i,x,y\n0,0.5,nan\n1,0.333333333,2\n"

    def test_jsonl_one_record_per_line(self, tmp_path):
        path = tmp_path / "log.jsonl"
        write_jsonl(path, [{"a": 1}, {"b": None}])
        lines = path.read_text().splitlines()
        assert [json.loads(line) for line in lines] == [{"a": 1}, {"b": None}]
