"""Mini-batch training loop shared by the patch grader and the cribriform detector."""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from config import GRADER_LEARNING_RATE, GRADER_BATCH_SIZE, GRADER_EPOCHS
from core.augment import augment_batch
from core.errors import ConfigError, NumericError
from core.optimizers import OptimizerConfig, optimizer_step


@dataclass
class TrainConfig:
    learning_rate: float = GRADER_LEARNING_RATE
    batch_size: int = GRADER_BATCH_SIZE
    epochs: int = GRADER_EPOCHS
    optimizer: str = "sgd"
    decay: bool = False
    augment: bool = True
    brightness: bool = False
    class_weighting: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be positive, got {self.epochs}")
        # validates learning rate, batch size and optimizer mode
        self.optimizer_config()

    def optimizer_config(self):
        return OptimizerConfig(mode=self.optimizer, learning_rate=self.learning_rate, batch_size=self.batch_size,
                               decay_epochs=self.epochs if self.decay else None)


@dataclass
class TrainResult:
    network: object
    history: list = field(default_factory=list)
    class_weights: np.ndarray = None

    def history_frame(self):
        return pd.DataFrame(self.history, columns=["epoch", "loss", "accuracy"])

    @property
    def final_loss(self):
        return self.history[-1]["loss"] if self.history else float("nan")


def to_input(pixels):
    """uint8 RGB patches to float32 in [0, 1]."""
    pixels = np.asarray(pixels)
    if np.issubdtype(pixels.dtype, np.integer):
        return pixels.astype(np.float32) / 255.0
    return pixels.astype(np.float32)


def fit(net, inputs, targets, loss_fn, config, correct_fn, progress=None):
    """Run ``config.epochs`` of shuffled mini-batch updates on ``net`` in place.

    ``loss_fn(outputs, targets)`` returns (loss, gradient w.r.t. logits) and
    ``correct_fn(outputs, targets)`` the number of correct predictions.
    """
    rng = np.random.default_rng(config.seed)
    opt = config.optimizer_config()
    state = {}
    history = []
    n = len(inputs)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total_loss, correct = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            batch = inputs[idx]
            if config.augment:
                batch = augment_batch(batch, rng, include_brightness=config.brightness)
            record = net.forward(batch, training=True, rng=rng)
            loss, grad = loss_fn(record.output, targets[idx])
            if not np.isfinite(loss):
                raise NumericError("loss", f"non-finite loss at epoch {epoch + 1}")
            grads = net.backward(record, grad, skip_output_activation=True, need_input_grad=False)
            optimizer_step(net, grads, state, opt, epoch)
            total_loss += loss * len(idx)
            correct += int(correct_fn(record.output, targets[idx]))
        entry = {"epoch": epoch + 1, "loss": total_loss / n, "accuracy": correct / n}
        history.append(entry)
        if progress is not None:
            progress(entry)
    net.trained = True
    return history
