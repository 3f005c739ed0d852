"""FSConv patch grader and the cribriform detector fine-tuned from it."""

from enum import Enum

import numpy as np
import pandas as pd

from config import (FSCONV_FILTERS, FC_UNITS, DROPOUT_RATE, NUM_CLASSES, INPUT_SIDE,
                    CRIBRIFORM_LEARNING_RATE, CRIBRIFORM_BATCH_SIZE, CRIBRIFORM_EPOCHS, DECISION_THRESHOLD)
from core.errors import DataError, EmptyClassError
from core.folds import split_patches
from core.grades import Grade
from core.layers import (Conv2D, MaxPool2D, ReLU, GlobalMaxPool, GlobalAvgPool, Flatten,
                         FullyConnected, Dropout, Softmax, Sigmoid)
from core.losses import class_weights, weighted_cross_entropy, binary_cross_entropy
from core.metrics import roc_auc, binary_report, classification_report, quadratic_kappa
from core.network import Network
from core.trainer import TrainConfig, TrainResult, fit, to_input


class TopModel(str, Enum):
    FC = "FC"
    GMP = "GMP"
    GAP = "GAP"
    GMP_FC = "GMP_FC"
    GAP_FC = "GAP_FC"


class FreezeDepth(str, Enum):
    CONV1 = "conv1"
    CONV2 = "conv2"
    CONV3 = "conv3"

    @property
    def layer_name(self):
        return f"Conv_{self.value[-1]}"


def base_layers(filters=FSCONV_FILTERS):
    layers = []
    for i, width in enumerate(filters, start=1):
        layers += [Conv2D(width, name=f"Conv_{i}"), ReLU(name=f"ReLU_{i}"), MaxPool2D(2, 2, name=f"Max-Pooling_{i}")]
    return layers


def top_layers(top, num_classes, fc_units=FC_UNITS, dropout=DROPOUT_RATE):
    top = TopModel(top)
    head = []
    if top is TopModel.FC:
        head.append(Flatten(name="Flatten"))
    elif top in (TopModel.GMP, TopModel.GMP_FC):
        head.append(GlobalMaxPool(name="GMP"))
    else:
        head.append(GlobalAvgPool(name="GAP"))
    if top in (TopModel.FC, TopModel.GMP_FC, TopModel.GAP_FC):
        head += [FullyConnected(fc_units, name="FC_1"), ReLU(name="ReLU_FC"), Dropout(dropout, name="Dropout_1")]
    return head + [FullyConnected(num_classes, name="Output"), Softmax(name="Softmax")]


def build_fsconv(top=TopModel.GMP, num_classes=NUM_CLASSES, input_side=INPUT_SIDE, filters=FSCONV_FILTERS,
                 fc_units=FC_UNITS, dropout=DROPOUT_RATE, seed=0):
    """Three conv/ReLU/max-pool blocks followed by the selected top model."""
    net = Network((input_side, input_side, 3), base_layers(filters) + top_layers(top, num_classes, fc_units, dropout),
                  rng_seed=seed)
    net.metadata = {"architecture": "fsconv", "top": TopModel(top).value, "num_classes": num_classes,
                    "filters": list(filters)}
    return net


def _one_hot(labels, num_classes):
    out = np.zeros((len(labels), num_classes), dtype=np.float64)
    out[np.arange(len(labels)), labels] = 1.0
    return out


def _argmax_correct(outputs, targets):
    return np.sum(outputs.argmax(axis=1) == targets.argmax(axis=1))


def select_folds(patches, folds=None):
    if folds is None:
        return list(patches)
    folds = set(folds)
    return [p for p in patches if p.fold in folds]


def train_grader(net, patches, folds=None, config=None, progress=None):
    """Train the patch grader with class-weighted cross-entropy on the patches of ``folds``."""
    config = config or TrainConfig()
    train = [p for p in select_folds(patches, folds) if p.label is not None]
    num_classes = net.output_shape[0]
    labels = np.array([int(p.label) for p in train], dtype=np.int64)
    counts = np.bincount(labels, minlength=num_classes)
    for c in np.flatnonzero(counts == 0):
        raise EmptyClassError(Grade(int(c)).name)
    weights = class_weights(counts) if config.class_weighting else np.ones(num_classes)

    inputs = to_input(np.stack([p.pixels for p in train]))
    targets = _one_hot(labels, num_classes)
    history = fit(net, inputs, targets, lambda out, y: weighted_cross_entropy(out, y, weights), config,
                  _argmax_correct, progress)
    return TrainResult(net, history, weights)


def predict_patch(net, pixels):
    return net.forward(to_input(pixels)[None]).output[0].astype(np.float64)


def predict_patches(net, pixels, batch_size=64):
    return net.predict(to_input(pixels), batch_size=batch_size).astype(np.float64)


def build_cribriform(grader, freeze=FreezeDepth.CONV2):
    """Copy the grader's conv base under a GMP + single sigmoid neuron head, frozen through ``freeze``."""
    if not grader.trained:
        raise DataError("cribriform fine-tuning needs a trained grader")
    names = [layer.name for layer in grader.layers]
    if "GMP" not in names:
        raise DataError("cribriform fine-tuning needs a grader with a GMP top")
    base = grader.copy().layers[:names.index("GMP")]
    net = Network(grader.input_shape, base + [GlobalMaxPool(name="GMP"), FullyConnected(1, name="Output"),
                                              Sigmoid(name="Sigmoid")], rng_seed=grader.rng_seed + 7)
    for fresh, trained in zip(net.layers, grader.layers[:len(base)]):
        for pname, value in trained.params.items():
            fresh.params[pname] = value.copy()
    net.unfreeze()
    net.freeze_through(FreezeDepth(freeze).layer_name)
    net.metadata = {"architecture": "fsconv-cribriform", "freeze": FreezeDepth(freeze).value,
                    "filters": grader.metadata.get("filters")}
    return net


def cribriform_config(**overrides):
    settings = {"learning_rate": CRIBRIFORM_LEARNING_RATE, "batch_size": CRIBRIFORM_BATCH_SIZE,
                "epochs": CRIBRIFORM_EPOCHS, "brightness": True, "class_weighting": False}
    settings.update(overrides)
    return TrainConfig(**settings)


def _threshold_correct(outputs, targets):
    return np.sum((outputs > DECISION_THRESHOLD) == (targets > 0.5))


def train_cribriform(net, gg4_patches, config=None, progress=None):
    config = config or cribriform_config()
    if any(p.label is not Grade.GG4 for p in gg4_patches):
        raise DataError("cribriform training accepts GG4 patches only")
    flags = np.array([[float(p.cribriform)] for p in gg4_patches])
    if len(flags) == 0 or flags.min() == flags.max():
        raise DataError("cribriform training set holds a single class")
    inputs = to_input(np.stack([p.pixels for p in gg4_patches]))
    history = fit(net, inputs, flags, binary_cross_entropy, config, _threshold_correct, progress)
    return TrainResult(net, history)


def predict_cribriform(net, pixels, batch_size=64):
    return net.predict(to_input(pixels), batch_size=batch_size)[:, 0].astype(np.float64)


def freeze_depth_sweep(grader, train_patches, holdout_patches, config=None, depths=tuple(FreezeDepth)):
    """Fine-tune one detector per freeze depth and score each on the held-out GG4 patches."""
    labels = np.array([p.cribriform for p in holdout_patches], dtype=bool)
    holdout_pixels = np.stack([p.pixels for p in holdout_patches])
    results = {}
    for depth in depths:
        net = build_cribriform(grader, depth)
        trained = train_cribriform(net, train_patches, config)
        scores = predict_cribriform(trained.network, holdout_pixels)
        report = binary_report(scores, labels, DECISION_THRESHOLD)
        report["auc"] = roc_auc(scores, labels).auc
        report["trainable_params"] = net.count_params(trainable_only=True)
        results[FreezeDepth(depth).value] = report
    return results


def _with_fold_summary(rows, group, metrics):
    """Per-fold rows followed by a ``mean`` and a ``std`` row for every ``group`` value."""
    frame = pd.DataFrame(rows)
    parts = []
    for name, block in frame.groupby(group, sort=False):
        parts += [block, pd.DataFrame([
            {group: name, "fold": "mean", **block[metrics].mean().to_dict()},
            {group: name, "fold": "std", **block[metrics].std(ddof=0).to_dict()},
        ])]
    return pd.concat(parts, ignore_index=True)


def _validation_folds(n_folds, test_fold):
    folds = [f for f in range(n_folds) if f != test_fold]
    if len(folds) < 2:
        raise DataError(f"cross-validation needs at least two non-test folds, got {folds}")
    return folds


def _kappa_or_nan(cm):
    try:
        return quadratic_kappa(cm)
    except DataError:
        return float("nan")


def cross_validate(patches, folds, config=None, top=TopModel.GMP, test_fold=None, seed=0, progress=None, **build):
    """Rotate the validation fold over the non-test folds and score a fresh grader on each.

    ``folds`` is the patient assignment; patches of ``test_fold`` never take part.
    Returns one row per validation fold plus mean and std rows.
    """
    top = TopModel(top)
    folds.apply(patches)
    labelled = [p for p in patches if p.label is not None]
    if not labelled:
        raise DataError("cross-validation needs labelled patches")
    side = labelled[0].pixels.shape[0]
    rows = []
    validation = _validation_folds(folds.n_folds, test_fold)
    for held_out in validation:
        train, holdout = split_patches(labelled, [f for f in validation if f != held_out], [held_out])
        if not holdout:
            raise DataError(f"validation fold {held_out} holds no labelled patches")
        net = build_fsconv(top, input_side=side, seed=seed, **build)
        result = train_grader(net, train, None, config, progress)
        predictions = predict_patches(result.network, np.stack([p.pixels for p in holdout])).argmax(axis=1)
        report = classification_report([int(p.label) for p in holdout], predictions, net.output_shape[0])
        rows.append({"top": top.value, "fold": held_out, "accuracy": report["accuracy"],
                     "macro_f1": report["macro_f1"], "kappa": _kappa_or_nan(report["confusion"]),
                     "train_patches": len(train), "holdout_patches": len(holdout)})
    return _with_fold_summary(rows, "top", ["accuracy", "macro_f1", "kappa"])


def compare_top_models(patches, folds, config=None, tops=tuple(TopModel), test_fold=None, seed=0, **build):
    return pd.concat([cross_validate(patches, folds, config, top, test_fold, seed, **build) for top in tops],
                     ignore_index=True)


def cross_validate_freeze(grader, gg4_patches, folds, config=None, depths=tuple(FreezeDepth), test_fold=None):
    """Cross-validated cribriform AUC per freeze depth, rotating the held-out fold like the grader.

    A fold whose training or held-out patches carry a single class gets NaN scores.
    """
    folds.apply(gg4_patches)
    validation = _validation_folds(folds.n_folds, test_fold)
    rows = []
    for depth in depths:
        depth = FreezeDepth(depth)
        for held_out in validation:
            train, holdout = split_patches(gg4_patches, [f for f in validation if f != held_out], [held_out])
            labels = np.array([p.cribriform for p in holdout], dtype=bool)
            row = {"freeze": depth.value, "fold": held_out, "auc": float("nan"), "accuracy": float("nan"),
                   "holdout_patches": len(holdout)}
            if len({p.cribriform for p in train}) == 2 and len(set(labels.tolist())) == 2:
                trained = train_cribriform(build_cribriform(grader, depth), train, config)
                scores = predict_cribriform(trained.network, np.stack([p.pixels for p in holdout]))
                row["auc"] = roc_auc(scores, labels).auc
                row["accuracy"] = float(np.mean((scores > DECISION_THRESHOLD) == labels))
            rows.append(row)
    return _with_fold_summary(rows, "freeze", ["auc", "accuracy"])
