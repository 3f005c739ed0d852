"""SGD and Adam update rules with optional linear learning-rate decay."""

from dataclasses import dataclass

import numpy as np

from config import ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON
from core.errors import ConfigError, NumericError, ShapeError

OPTIMIZER_MODES = ("sgd", "adam")


@dataclass
class OptimizerConfig:
    mode: str = "sgd"
    learning_rate: float = 0.01
    batch_size: int = 32
    decay_epochs: int = None
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    epsilon: float = ADAM_EPSILON

    def __post_init__(self):
        if self.mode not in OPTIMIZER_MODES:
            raise ConfigError(f"unknown optimizer {self.mode!r}; expected one of {OPTIMIZER_MODES}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be positive, got {self.batch_size}")
        if self.decay_epochs is not None and self.decay_epochs < 1:
            raise ConfigError(f"decay epochs must be positive, got {self.decay_epochs}")

    def learning_rate_at(self, epoch):
        """Linear decay lr0 * (1 - epoch / E); constant when no decay horizon is set."""
        if not self.decay_epochs:
            return self.learning_rate
        return self.learning_rate * max(0.0, 1.0 - epoch / self.decay_epochs)


def optimizer_step(net, gradients, state, config, epoch=0):
    """Apply one update to every trainable parameter of ``net`` in place.

    ``state`` holds per-parameter Adam moments and is mutated; frozen layers
    are never touched. A non-finite gradient rejects the whole step.
    """
    pending = []
    for layer, pname, value in net.trainable_parameters():
        key = (layer.name, pname)
        if key not in gradients:
            raise ShapeError(layer.name, f"no gradient supplied for parameter {pname}")
        grad = gradients[key]
        if grad.shape != value.shape:
            raise ShapeError(layer.name, f"gradient shape {grad.shape} does not match {pname} {value.shape}")
        if not np.all(np.isfinite(grad)):
            raise NumericError(layer.name, f"non-finite gradient for {pname}")
        pending.append((key, value, grad))

    lr = config.learning_rate_at(epoch)
    for key, value, grad in pending:
        if config.mode == "sgd":
            value -= (lr * grad).astype(value.dtype)
            continue
        slot = state.get(key)
        if slot is None:
            slot = state[key] = {"t": 0, "m": np.zeros_like(grad), "v": np.zeros_like(grad)}
        slot["t"] += 1
        slot["m"] = config.beta1 * slot["m"] + (1 - config.beta1) * grad
        slot["v"] = config.beta2 * slot["v"] + (1 - config.beta2) * grad * grad
        m_hat = slot["m"] / (1 - config.beta1 ** slot["t"])
        v_hat = slot["v"] / (1 - config.beta2 ** slot["t"])
        value -= (lr * m_hat / (np.sqrt(v_hat) + config.epsilon)).astype(value.dtype)
    return net, state
