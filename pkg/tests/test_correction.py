"""Category correction: fusion schedule, blending, and the mock classifier."""

import numpy as np
import pytest

from plquality.correction import (
    ClassifierQuery,
    Distribution,
    FusionState,
    MockExternalClassifier,
    PrecomputedClassifier,
    correct_category,
    fuse,
    fusion_weight,
)


def dist(*probs):
    return Distribution(np.array(probs, dtype=float))


class TestFusionWeight:
    def test_start_is_half(self):
        assert fusion_weight(FusionState(it_cur=0, it_max=1000)) == 0.5

    def test_end_is_zero(self):
        assert fusion_weight(FusionState(it_cur=1000, it_max=1000)) == pytest.approx(0.0, abs=1e-16)

    def test_midpoint_is_quarter(self):
        assert fusion_weight(FusionState(it_cur=500, it_max=1000)) == pytest.approx(0.25, abs=1e-16)

    def test_monotone_non_increasing(self):
        weights = [fusion_weight(FusionState(it_cur=i, it_max=357)) for i in range(358)]
        assert all(b <= a for a, b in zip(weights, weights[1:]))
        assert weights[0] == 0.5
        assert weights[-1] == pytest.approx(0.0, abs=1e-16)

    def test_state_invariants(self):
        with pytest.raises(ValueError):
            FusionState(it_cur=5, it_max=4)
        with pytest.raises(ValueError):
            FusionState(it_cur=-1, it_max=4)
        with pytest.raises(ValueError):
            FusionState(it_cur=0, it_max=0)


class TestFuse:
    def test_zero_weight_is_teacher(self):
        teacher = dist(0.2, 0.8)
        fused = fuse(teacher, dist(0.9, 0.1), 0.0)
        np.testing.assert_array_equal(fused.probs, teacher.probs)

    def test_symmetric_blend(self):
        fused = fuse(dist(0.2, 0.8), dist(0.8, 0.2), 0.5)
        np.testing.assert_allclose(fused.probs, [0.5, 0.5], atol=1e-15)

    def test_hand_arithmetic(self):
        # 0.25 * 0.2 + 0.75 * 0.6 = 0.5 per entry.
        fused = fuse(dist(0.6, 0.4), dist(0.2, 0.8), 0.25)
        np.testing.assert_allclose(fused.probs, [0.5, 0.5], atol=1e-15)

    def test_normalization_preserved(self, rng):
        for _ in range(200):
            n = int(rng.integers(2, 9))
            a = rng.dirichlet(np.ones(n))
            b = rng.dirichlet(np.ones(n))
            w = float(rng.uniform(0.0, 1.0))
            fused = fuse(Distribution(a), Distribution(b), w)
            assert abs(fused.probs.sum() - 1.0) <= 1e-9

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            fuse(dist(1.0), dist(0.5, 0.5), 0.2)


class TestCorrectCategory:
    def test_teacher_passthrough_at_schedule_end(self, rng):
        state = FusionState(it_cur=100, it_max=100)
        for _ in range(100):
            n = int(rng.integers(2, 7))
            teacher = Distribution(rng.dirichlet(np.ones(n)))
            external = Distribution(rng.dirichlet(np.ones(n)))
            assert correct_category(teacher, external, state) == teacher.argmax()

    def test_external_overturns_teacher_early(self):
        # w = 0.5: fused = [0.325, 0.675] -> class 1.
        state = FusionState(it_cur=0, it_max=10)
        got = correct_category(dist(0.55, 0.45), dist(0.1, 0.9), state)
        assert got == 1

    def test_tie_breaks_to_lowest_index(self):
        state = FusionState(it_cur=0, it_max=10)
        assert correct_category(dist(0.5, 0.5), dist(0.5, 0.5), state) == 0

    def test_shared_argmax_never_changes(self, rng):
        # If teacher and external agree on the argmax, no weight changes it.
        for _ in range(100):
            n = int(rng.integers(2, 6))
            teacher = rng.dirichlet(np.ones(n))
            winner = int(np.argmax(teacher))
            external = rng.dirichlet(np.ones(n))
            external[winner] = external.max() + 0.2
            external /= external.sum()
            it_max = 50
            for it_cur in (0, 13, 25, 50):
                got = correct_category(
                    Distribution(teacher), Distribution(external), FusionState(it_cur, it_max)
                )
                assert got == winner


class TestMockClassifier:
    def test_perfect_accuracy_is_one_hot(self):
        mock = MockExternalClassifier(num_classes=4, accuracy=1.0)
        response = mock.classify(ClassifierQuery("0", 4, patch_class=2))
        np.testing.assert_array_equal(response.probs, [0.0, 0.0, 1.0, 0.0])

    def test_zero_accuracy_uniform_kernel(self):
        mock = MockExternalClassifier(num_classes=4, accuracy=0.0, confusion="uniform")
        response = mock.classify(ClassifierQuery("0", 4, patch_class=1))
        np.testing.assert_allclose(response.probs, 0.25)

    def test_residual_kernel_row(self):
        mock = MockExternalClassifier(num_classes=5, accuracy=0.8, confusion="residual")
        response = mock.classify(ClassifierQuery("0", 5, patch_class=0))
        np.testing.assert_allclose(response.probs, [0.8, 0.05, 0.05, 0.05, 0.05], atol=1e-15)

    def test_unknown_patch_gives_uniform(self):
        mock = MockExternalClassifier(num_classes=4, accuracy=0.9)
        response = mock.classify(ClassifierQuery("0", 4, patch_class=None))
        np.testing.assert_allclose(response.probs, 0.25)

    def test_unknown_class_id_rejected(self):
        mock = MockExternalClassifier(num_classes=3)
        with pytest.raises(ValueError):
            mock.classify(ClassifierQuery("0", 3, patch_class=7))

    def test_sample_hard_deterministic_given_seed(self):
        query = ClassifierQuery("0", 3, patch_class=0)
        runs = []
        for _ in range(2):
            mock = MockExternalClassifier(num_classes=3, accuracy=0.5, seed=11, sample_hard=True)
            runs.append([mock.classify(query).argmax() for _ in range(20)])
        assert runs[0] == runs[1]

    def test_custom_kernel(self):
        kernel = np.array([[0.0, 1.0], [1.0, 0.0]])
        mock = MockExternalClassifier(num_classes=2, accuracy=0.6, confusion=kernel)
        response = mock.classify(ClassifierQuery("0", 2, patch_class=0))
        np.testing.assert_allclose(response.probs, [0.6, 0.4], atol=1e-15)


class TestPrecomputedClassifier:
    def test_lookup(self):
        table = {"scene0/1": [0.1, 0.9]}
        clf = PrecomputedClassifier(table)
        response = clf.classify(ClassifierQuery("scene0/1", 2))
        np.testing.assert_allclose(response.probs, [0.1, 0.9])

    def test_missing_id(self):
        clf = PrecomputedClassifier({})
        with pytest.raises(KeyError):
            clf.classify(ClassifierQuery("nope", 2))

    def test_wrong_length(self):
        clf = PrecomputedClassifier({"a": [0.5, 0.5]})
        with pytest.raises(ValueError):
            clf.classify(ClassifierQuery("a", 3))


class TestDistribution:
    def test_must_sum_to_one(self):
        with pytest.raises(ValueError):
            Distribution(np.array([0.5, 0.6]))

    def test_non_negative(self):
        with pytest.raises(ValueError):
            Distribution(np.array([1.2, -0.2]))
