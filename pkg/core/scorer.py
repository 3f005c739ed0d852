"""Slide-level Gleason scoring from grade percentages.

Two scorers: a fixed-threshold rule and a small two-headed MLP trained
with Adam.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from config import (SCORE_THRESHOLD, SCORER_HIDDEN, SCORER_LEARNING_RATE, SCORER_EPOCHS, SCORER_BATCH_SIZE,
                    NUM_CLASSES)
from core.errors import DataError, ConfigError
from core.grades import Grade, GleasonScore
from core.layers import FullyConnected, ReLU, Softmax
from core.losses import categorical_cross_entropy
from core.network import Network
from core.optimizers import OptimizerConfig, optimizer_step
from core.serialization import save_model, load_model


def threshold_score(percentages, threshold=SCORE_THRESHOLD):
    """Most and second-most frequent cancer grades, each counted only at or above ``threshold``.

    Equal fractions go to the higher grade. A missing secondary repeats the
    primary; no qualifying grade means a non-cancerous slide.
    """
    ranked = sorted(percentages.cancer_fractions(), key=lambda gf: (-gf[1], -int(gf[0])))
    (first, f1), (second, f2) = ranked[0], ranked[1]
    if f1 < threshold:
        return GleasonScore.from_grades(Grade.NC)
    return GleasonScore.from_grades(first, second if f2 >= threshold else first)


@dataclass
class ScorerSample:
    percentages: object
    score: GleasonScore


@dataclass
class ScorerConfig:
    learning_rate: float = SCORER_LEARNING_RATE
    epochs: int = SCORER_EPOCHS
    batch_size: int = SCORER_BATCH_SIZE
    decay: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"scorer epochs must be positive, got {self.epochs}")
        self.optimizer_config()

    def optimizer_config(self):
        return OptimizerConfig(mode="adam", learning_rate=self.learning_rate, batch_size=self.batch_size,
                               decay_epochs=self.epochs if self.decay else None)


class ScorerModel:
    """Shared trunk feeding a primary-grade head and a secondary-grade head.

    The trunk and the heads are three separate networks: the engine's Network
    is a single chain, and the two heads branch off the same hidden vector.
    Training sums both heads' input gradients into the trunk's backward pass,
    so together they behave as one two-output model.
    """

    FILES = {"trunk": "scorer_trunk.fscv", "primary": "scorer_primary.fscv", "secondary": "scorer_secondary.fscv"}

    def __init__(self, trunk, primary, secondary):
        self.trunk = trunk
        self.primary = primary
        self.secondary = secondary
        self.history = []

    def networks(self):
        return {"trunk": self.trunk, "primary": self.primary, "secondary": self.secondary}

    def count_params(self):
        return sum(net.count_params() for net in self.networks().values())

    @property
    def trained(self):
        return all(net.trained for net in self.networks().values())

    def predict(self, features):
        hidden = self.trunk.forward(np.atleast_2d(features)).output
        return self.primary.forward(hidden).output, self.secondary.forward(hidden).output

    def save(self, directory):
        directory = Path(directory)
        for key, net in self.networks().items():
            save_model(net, directory / self.FILES[key])
        return directory

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        return cls(*(load_model(directory / cls.FILES[key]) for key in ("trunk", "primary", "secondary")))


def build_scorer(seed=0, hidden=SCORER_HIDDEN):
    layers = []
    for i, units in enumerate(hidden, start=1):
        layers += [FullyConnected(units, name=f"Dense_{i}"), ReLU(name=f"ReLU_{i}")]
    trunk = Network((NUM_CLASSES,), layers, rng_seed=seed)
    heads = [Network((hidden[-1],), [FullyConnected(NUM_CLASSES, name=f"{role}_Output"),
                                     Softmax(name=f"{role}_Softmax")], rng_seed=seed + i)
             for i, role in enumerate(("Primary", "Secondary"), start=1)]
    return ScorerModel(trunk, *heads)


def _encode(samples):
    features = np.stack([s.percentages.as_array() for s in samples])
    primary = np.zeros((len(samples), NUM_CLASSES))
    secondary = np.zeros((len(samples), NUM_CLASSES))
    for i, sample in enumerate(samples):
        primary[i, int(sample.score.primary)] = 1.0
        secondary[i, int(sample.score.secondary)] = 1.0
    return features, primary, secondary


def train_scorer(samples, config=None):
    """Fit a fresh scorer on (percentages, score) samples; both heads share the trunk gradient."""
    config = config or ScorerConfig()
    samples = list(samples)
    if len(samples) < 2:
        raise DataError("scorer training needs at least two slides")
    if len({(s.score.primary, s.score.secondary) for s in samples}) < 2:
        raise DataError("scorer training set holds a single label combination")
    model = build_scorer(config.seed)
    features, primary, secondary = _encode(samples)
    opt = config.optimizer_config()
    states = {key: {} for key in model.networks()}
    rng = np.random.default_rng(config.seed)
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(samples))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            trunk_record = model.trunk.forward(features[idx], training=True, rng=rng)
            hidden = trunk_record.output
            upstream = np.zeros_like(hidden)
            for key, targets in (("primary", primary), ("secondary", secondary)):
                head = model.networks()[key]
                record = head.forward(hidden, training=True, rng=rng)
                loss, grad = categorical_cross_entropy(record.output, targets[idx])
                head_grads = head.backward(record, grad, skip_output_activation=True)
                optimizer_step(head, head_grads, states[key], opt, epoch)
                upstream = upstream + head_grads.input_grad
                total += loss * len(idx)
            trunk_grads = model.trunk.backward(trunk_record, upstream, need_input_grad=False)
            optimizer_step(model.trunk, trunk_grads, states["trunk"], opt, epoch)
        history.append({"epoch": epoch + 1, "loss": total / len(samples)})
    for net in model.networks().values():
        net.trained = True
    model.history = history
    return model


def mlp_score(model, percentages):
    primary, secondary = model.predict(percentages.as_array())
    return GleasonScore.from_grades(Grade(int(np.argmax(primary[0]))), Grade(int(np.argmax(secondary[0]))))


def leave_one_out(samples, config=None, progress=None):
    """Score every sample with a scorer trained on all the others."""
    samples = list(samples)
    predictions = []
    for i, held_out in enumerate(samples):
        model = train_scorer(samples[:i] + samples[i + 1:], config)
        predictions.append(mlp_score(model, held_out.percentages))
        if progress is not None:
            progress(i, predictions[-1])
    return predictions
