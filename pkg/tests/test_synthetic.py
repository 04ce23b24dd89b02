"""Scene generation determinism and controlled prediction corruption."""

from collections import Counter

import numpy as np
import pytest

from plquality.instances import binarize, mask_iou
from plquality.synthetic import (
    BenchmarkConfig,
    NoiseChannel,
    corrupt_predictions,
    generate_dataset,
    generate_scene,
)


class TestGenerateScene:
    def test_same_seed_identical(self):
        config = BenchmarkConfig()
        a = generate_scene(123, config)
        b = generate_scene(123, config)
        assert np.array_equal(a.features, b.features)
        assert len(a.instances) == len(b.instances)
        for ia, ib in zip(a.instances, b.instances):
            assert ia.class_id == ib.class_id
            assert np.array_equal(ia.mask.bits, ib.mask.bits)

    def test_different_seeds_differ(self):
        config = BenchmarkConfig()
        a = generate_scene(1, config)
        b = generate_scene(2, config)
        assert not np.array_equal(a.features, b.features)

    def test_single_instance_range(self):
        config = BenchmarkConfig(instance_count=(1, 1))
        for seed in range(20):
            scene = generate_scene(seed, config)
            assert len(scene.instances) == 1

    def test_instances_disjoint_and_in_bounds(self):
        config = BenchmarkConfig()
        for seed in range(30):
            scene = generate_scene(seed, config)
            occupancy = np.zeros(scene.shape, dtype=int)
            for inst in scene.instances:
                assert inst.mask.shape == scene.shape
                assert inst.mask.area > 0
                occupancy += inst.mask.bits
            assert occupancy.max() <= 1

    def test_distinct_classes_per_scene(self):
        config = BenchmarkConfig()
        for seed in range(30):
            scene = generate_scene(seed, config)
            classes = [inst.class_id for inst in scene.instances]
            assert len(set(classes)) == len(classes)

    def test_class_frequency_follows_skew(self):
        # Distinct-class sampling flattens the marginal a little, so the
        # band is checked with a two-instance cap where the effect is mild.
        config = BenchmarkConfig(instance_count=(1, 2))
        counts = Counter()
        for seed in range(400):
            for inst in generate_scene(seed, config).instances:
                counts[inst.class_id] += 1
        total = sum(counts.values())
        for class_id, target in enumerate(config.class_skew):
            assert abs(counts[class_id] / total - target) <= 0.10

    def test_features_linearly_separable_signal(self):
        # The class signal must dominate on instance pixels on average.
        config = BenchmarkConfig(feature_noise=0.1)
        scene = generate_scene(7, config)
        for inst in scene.instances:
            own = scene.features[inst.mask.bits, inst.class_id].mean()
            assert own > 1.0  # signal_strength * scale split well above noise

    def test_dataset_split_determinism(self):
        config = BenchmarkConfig()
        a = generate_dataset(config)
        b = generate_dataset(config)
        assert np.array_equal(a.labeled[0].features, b.labeled[0].features)
        assert np.array_equal(a.evaluation[-1].features, b.evaluation[-1].features)
        # splits use disjoint seed streams
        assert not np.array_equal(a.labeled[0].features, a.unlabeled[0].features)


class TestBenchmarkConfig:
    def test_round_trips_through_dict(self):
        config = BenchmarkConfig(num_classes=4, class_skew=(0.4, 0.3, 0.2, 0.1), instance_count=(1, 4))
        restored = BenchmarkConfig.from_dict(config.to_dict())
        assert restored == config

    def test_skew_must_sum_to_one(self):
        with pytest.raises(ValueError):
            BenchmarkConfig(class_skew=(0.5, 0.3, 0.3))

    def test_instance_count_capped_by_classes(self):
        with pytest.raises(ValueError):
            BenchmarkConfig(instance_count=(1, 4))

    def test_strong_must_dominate_weak(self):
        with pytest.raises(ValueError):
            BenchmarkConfig(
                weak_channel=NoiseChannel("weak", logit_noise=2.0),
                strong_channel=NoiseChannel("strong", logit_noise=0.1),
            )

    def test_channel_validation(self):
        with pytest.raises(ValueError):
            NoiseChannel("weak", logit_noise=-1.0)
        with pytest.raises(ValueError):
            NoiseChannel("weak", class_confusion=1.5)
        with pytest.raises(ValueError):
            NoiseChannel("medium")


class TestCorruptPredictions:
    def test_zero_noise_recovers_ground_truth(self):
        config = BenchmarkConfig()
        scene = generate_scene(11, config)
        preds = corrupt_predictions(scene, NoiseChannel("weak"), seed=0)
        assert len(preds) == len(scene.instances)
        for pred, gt in zip(preds, scene.instances):
            assert np.array_equal(binarize(pred.mask_logits).bits, gt.mask.bits)
            assert int(np.argmax(pred.class_logits.values)) == gt.class_id

    def test_full_confusion_flips_every_class(self):
        config = BenchmarkConfig(num_classes=2, class_skew=(0.6, 0.4), instance_count=(1, 2))
        channel = NoiseChannel("strong", class_confusion=1.0)
        for seed in range(10):
            scene = generate_scene(seed, config)
            preds = corrupt_predictions(scene, channel, seed=seed)
            for pred, gt in zip(preds, scene.instances):
                assert int(np.argmax(pred.class_logits.values)) == 1 - gt.class_id

    def test_full_dropout_drops_everything(self):
        config = BenchmarkConfig()
        scene = generate_scene(3, config)
        preds = corrupt_predictions(scene, NoiseChannel("strong", instance_dropout=1.0), seed=0)
        assert preds == []

    def test_deterministic_given_seed(self):
        config = BenchmarkConfig()
        scene = generate_scene(5, config)
        channel = NoiseChannel("strong", logit_noise=1.5, class_confusion=0.3)
        a = corrupt_predictions(scene, channel, seed=42)
        b = corrupt_predictions(scene, channel, seed=42)
        assert len(a) == len(b)
        for pa, pb in zip(a, b):
            assert np.array_equal(pa.mask_logits.values, pb.mask_logits.values)
            assert np.array_equal(pa.class_logits.values, pb.class_logits.values)

    def test_stddev_two_iou_lands_in_frozen_interval(self):
        # Golden interval measured once at these seeds: mean IoU 0.7762
        # over 107 instances (min 0.569, max 0.910).
        config = BenchmarkConfig()
        channel = NoiseChannel("strong", logit_noise=2.0)
        ious = []
        for seed in range(50):
            scene = generate_scene(seed, config, scene_id=seed)
            preds = corrupt_predictions(scene, channel, seed=seed + 1000)
            for pred, gt in zip(preds, scene.instances):
                ious.append(mask_iou(binarize(pred.mask_logits), gt.mask))
        mean_iou = float(np.mean(ious))
        assert 0.74 <= mean_iou <= 0.81
