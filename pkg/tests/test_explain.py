import numpy as np
import pytest

from core.errors import DataError
from core.explain import cam, cam_postprocess, activation_maximization
from core.fsconv import build_fsconv
from core.layers import Conv2D
from core.network import Network


@pytest.fixture
def grader():
    return build_fsconv("GMP", input_side=16, filters=(4, 8, 8), seed=5)


class TestCam:
    def test_gmp_cam_is_weighted_feature_sum(self, grader, rng):
        pixels = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
        raw = cam(grader, pixels, target_class=2).raw
        record = grader.forward(pixels[None].astype(np.float32) / 255.0)
        features = record.activations[grader.index_of("GMP")][0]
        expected = features @ grader.layer("Output").params["W"][:, 2]
        assert raw.shape == (2, 2)
        np.testing.assert_allclose(raw, expected, rtol=1e-5, atol=1e-6)

    def test_logit_offset_does_not_change_the_map(self, grader, rng):
        pixels = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
        before = cam(grader, pixels, 1).raw
        grader.layer("Output").params["b"] += 3.0
        np.testing.assert_allclose(cam(grader, pixels, 1).raw, before)

    def test_flatten_top_is_rejected(self, rng):
        net = build_fsconv("FC", input_side=16, filters=(2, 2, 2), fc_units=4)
        with pytest.raises(DataError):
            cam(net, rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8), 0)

    def test_class_out_of_range(self, grader):
        with pytest.raises(DataError):
            cam(grader, np.zeros((16, 16, 3), dtype=np.uint8), 4)


class TestPostprocess:
    def test_normalise_and_threshold(self):
        out = cam_postprocess(np.array([[0.0, 1.0], [2.0, 4.0]]), (2, 2))
        np.testing.assert_allclose(out.heatmap, [[0.0, 0.25], [0.5, 1.0]])
        np.testing.assert_array_equal(out.mask, [[False, False], [False, True]])

    def test_negative_values_are_clipped(self):
        out = cam_postprocess(np.array([[-5.0, 2.0]]), (1, 2))
        np.testing.assert_allclose(out.heatmap, [[0.0, 1.0]])

    def test_constant_map_is_all_attention(self):
        out = cam_postprocess(np.full((3, 3), 2.5), (3, 3))
        assert np.all(out.heatmap == 1.0) and out.mask.all()

    def test_idempotent(self, rng):
        first = cam_postprocess(rng.standard_normal((4, 4)), (4, 4))
        second = cam_postprocess(first.heatmap, (4, 4))
        np.testing.assert_allclose(second.heatmap, first.heatmap)
        np.testing.assert_array_equal(second.mask, first.mask)

    def test_resized_to_input(self, rng):
        out = cam_postprocess(rng.random((2, 2)) + 0.1, (16, 16, 3))
        assert out.heatmap.shape == out.mask.shape == (16, 16)
        assert 0.0 <= out.heatmap.min() and out.heatmap.max() <= 1.0

    def test_no_positive_response_warns(self):
        with pytest.warns(UserWarning):
            out = cam_postprocess(-np.ones((2, 2)), (4, 4))
        assert not out.heatmap.any() and not out.mask.any()


class TestActivationMaximization:
    @pytest.fixture
    def identity_conv(self):
        net = Network((6, 6, 3), [Conv2D(1, kernel_height=1, kernel_width=1, name="c")])
        net.layer("c").params["W"][...] = 1.0
        return net

    def test_linear_filter_saturates_the_input(self, identity_conv):
        result = activation_maximization(identity_conv, "c", 0, steps=20, step_size=0.1)
        np.testing.assert_allclose(result.image, 1.0)
        assert result.trace[-1] == pytest.approx(-6 * 6 * 3)
        assert result.trace[-1] < result.initial_loss

    def test_zero_steps_returns_the_seeded_start(self, identity_conv):
        a = activation_maximization(identity_conv, "c", 0, steps=0, seed=3)
        b = activation_maximization(identity_conv, "c", 0, steps=0, seed=3)
        np.testing.assert_array_equal(a.image, b.image)
        assert a.trace == []
        assert 0.0 <= a.image.min() and a.image.max() <= 1.0

    def test_zero_step_size_leaves_the_image(self, identity_conv):
        start = activation_maximization(identity_conv, "c", 0, steps=0, seed=1).image
        moved = activation_maximization(identity_conv, "c", 0, steps=3, step_size=0.0, seed=1)
        np.testing.assert_array_equal(moved.image, start)

    def test_filter_out_of_range(self, grader):
        with pytest.raises(DataError):
            activation_maximization(grader, "Conv_3", 8, steps=1)

    def test_deep_filter_loss_does_not_increase(self, grader):
        result = activation_maximization(grader, "Conv_3", 1, steps=5, step_size=0.01, seed=2)
        assert result.image.shape == (16, 16, 3)
        assert min(result.trace) <= result.initial_loss
