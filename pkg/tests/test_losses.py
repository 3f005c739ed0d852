import numpy as np
import pytest

from core.errors import DataError, EmptyClassError
from core.layers import Softmax
from core.losses import class_weights, weighted_cross_entropy, categorical_cross_entropy, binary_cross_entropy


class TestClassWeights:
    def test_inverse_frequency(self):
        weights = class_weights([4417, 1636, 3622, 665])
        np.testing.assert_allclose(weights, [9.364, 25.281, 11.419, 62.195], rtol=1e-3)

    def test_balanced_counts_give_unit_weights_times_classes(self):
        np.testing.assert_allclose(class_weights([10, 10, 10, 10]), [4.0, 4.0, 4.0, 4.0])

    def test_empty_class(self):
        with pytest.raises(EmptyClassError):
            class_weights([5, 0, 3, 2])


class TestWeightedCrossEntropy:
    def test_perfect_prediction_has_zero_loss(self):
        target = np.eye(4)[[2]]
        loss, grad = weighted_cross_entropy(target, target, [1.0, 2.0, 3.0, 4.0])
        assert loss == pytest.approx(0.0, abs=1e-9)
        np.testing.assert_allclose(grad, 0.0, atol=1e-12)

    def test_unit_weights_scale_plain_cross_entropy(self, rng):
        logits = rng.standard_normal((5, 4))
        probs, _ = Softmax().forward(logits)
        targets = np.eye(4)[rng.integers(0, 4, size=5)]
        weighted, _ = weighted_cross_entropy(probs, targets)
        plain, _ = categorical_cross_entropy(probs, targets)
        assert weighted * 4 == pytest.approx(plain)

    def test_logit_gradient_matches_finite_differences(self, rng):
        weights = np.array([0.5, 2.0, 1.0, 3.0])
        logits = rng.standard_normal((3, 4))
        targets = np.eye(4)[[0, 3, 1]]

        def loss_at(z):
            return weighted_cross_entropy(Softmax().forward(z)[0], targets, weights)[0]

        _, grad = weighted_cross_entropy(Softmax().forward(logits)[0], targets, weights)
        eps = 1e-6
        numeric = np.zeros_like(logits)
        for index in np.ndindex(logits.shape):
            plus, minus = logits.copy(), logits.copy()
            plus[index] += eps
            minus[index] -= eps
            numeric[index] = (loss_at(plus) - loss_at(minus)) / (2 * eps)
        np.testing.assert_allclose(grad, numeric, atol=1e-7)

    def test_distribution_must_sum_to_one(self):
        with pytest.raises(DataError):
            weighted_cross_entropy([[0.5, 0.2, 0.1, 0.1]], [[1, 0, 0, 0]])


class TestBinaryCrossEntropy:
    def test_confident_wrong_prediction(self):
        loss, _ = binary_cross_entropy([[0.9]], [[0.0]])
        assert loss == pytest.approx(-np.log(0.1))

    def test_saturated_correct_prediction_is_finite(self):
        loss, grad = binary_cross_entropy([[1.0], [0.0]], [[1.0], [0.0]])
        assert loss == pytest.approx(0.0, abs=1e-9)
        np.testing.assert_allclose(grad, 0.0)
