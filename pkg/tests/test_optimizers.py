import numpy as np
import pytest

from core.errors import ConfigError, NumericError, ShapeError
from core.layers import FullyConnected
from core.network import Network
from core.optimizers import OptimizerConfig, optimizer_step


def _scalar_net():
    net = Network((1,), [FullyConnected(1, name="a"), FullyConnected(1, name="b")])
    for layer in net.layers:
        layer.params["W"][...] = 1.0
    return net


def _grads(value):
    return {(name, p): np.full((1, 1) if p == "W" else (1,), value)
            for name in ("a", "b") for p in ("W", "b")}


class TestSGD:
    def test_plain_update(self):
        net = _scalar_net()
        optimizer_step(net, _grads(0.5), {}, OptimizerConfig("sgd", learning_rate=0.1))
        assert net.layer("a").params["W"][0, 0] == pytest.approx(0.95)

    def test_frozen_layer_is_bit_identical(self):
        net = _scalar_net()
        net.layer("a").frozen = True
        before = net.layer("a").params["W"].copy()
        optimizer_step(net, _grads(0.5), {}, OptimizerConfig("sgd", learning_rate=0.1))
        np.testing.assert_array_equal(net.layer("a").params["W"], before)
        assert net.layer("b").params["W"][0, 0] == pytest.approx(0.95)

    def test_non_finite_gradient_leaves_parameters_untouched(self):
        net = _scalar_net()
        grads = _grads(0.5)
        grads[("b", "W")] = np.array([[np.nan]])
        with pytest.raises(NumericError) as info:
            optimizer_step(net, grads, {}, OptimizerConfig("sgd", learning_rate=0.1))
        assert info.value.layer_name == "b"
        assert net.layer("a").params["W"][0, 0] == 1.0

    def test_missing_gradient(self):
        grads = _grads(0.5)
        del grads[("a", "b")]
        with pytest.raises(ShapeError):
            optimizer_step(_scalar_net(), grads, {}, OptimizerConfig())


class TestAdam:
    def test_first_step_moves_by_learning_rate(self):
        net = _scalar_net()
        optimizer_step(net, _grads(3.0), {}, OptimizerConfig("adam", learning_rate=0.01))
        assert net.layer("a").params["W"][0, 0] == pytest.approx(0.99, abs=1e-6)

    def test_zero_gradient_is_a_no_op(self):
        net = _scalar_net()
        state = {}
        optimizer_step(net, _grads(0.0), state, OptimizerConfig("adam"))
        assert net.layer("a").params["W"][0, 0] == 1.0
        assert state[("a", "W")]["t"] == 1


class TestConfig:
    def test_linear_decay(self):
        config = OptimizerConfig("adam", learning_rate=0.01, decay_epochs=100)
        assert config.learning_rate_at(0) == pytest.approx(0.01)
        assert config.learning_rate_at(50) == pytest.approx(0.005)
        assert config.learning_rate_at(100) == 0.0

    @pytest.mark.parametrize("kwargs", [{"mode": "rmsprop"}, {"learning_rate": 0.0}, {"batch_size": 0}])
    def test_invalid_settings(self, kwargs):
        with pytest.raises(ConfigError):
            OptimizerConfig(**kwargs)
