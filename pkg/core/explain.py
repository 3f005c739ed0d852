"""Class activation maps and activation maximisation."""

import warnings
from dataclasses import dataclass

import cv2
import numpy as np

from config import CAM_MASK_LEVEL, AM_INIT_MEAN, AM_INIT_STD, AM_STEP_SIZE, AM_STEPS
from core.errors import DataError
from core.layers import GLOBAL_POOLING, OUTPUT_ACTIVATIONS
from core.trainer import to_input


@dataclass
class CamHeatmap:
    raw: np.ndarray
    heatmap: np.ndarray = None
    mask: np.ndarray = None


def _pooling_index(net):
    indices = [i for i, layer in enumerate(net.layers) if layer.kind in GLOBAL_POOLING]
    if not indices:
        raise DataError("class activation maps need a global-pooling top")
    return indices[-1]


def cam(net, pixels, target_class):
    """Raw CAM: last-conv activations weighted by d(class logit) / d(pooled feature)."""
    pool = _pooling_index(net)
    x = to_input(pixels)
    if x.shape == net.input_shape:
        x = x[None]
    record = net.forward(x)
    skip = net.layers[-1].kind in OUTPUT_ACTIVATIONS
    logits_shape = record.activations[-2].shape if skip else record.output.shape
    if not 0 <= target_class < logits_shape[-1]:
        raise DataError(f"class {target_class} out of range for {logits_shape[-1]} outputs")
    upstream = np.zeros(logits_shape, dtype=net.dtype)
    upstream[0, target_class] = 1.0
    grads = net.backward(record, upstream, skip_output_activation=skip, stop_at=pool + 1, need_param_grads=False)
    weights = grads.input_grad[0]
    features = record.activations[pool][0]
    return CamHeatmap(raw=(features @ weights).astype(np.float64))


def cam_postprocess(raw, input_shape, level=CAM_MASK_LEVEL):
    """Clip, normalise by the maximum, threshold at ``level`` and resize to ``input_shape``."""
    raw_map = raw.raw if isinstance(raw, CamHeatmap) else np.asarray(raw, dtype=np.float64)
    height, width = input_shape[:2]
    clipped = np.clip(raw_map, 0.0, None)
    peak = clipped.max()
    if peak <= 0:
        warnings.warn("class activation map has no positive response; returning zeros")
        return CamHeatmap(raw_map, np.zeros((height, width)), np.zeros((height, width), dtype=bool))
    normalized = clipped / peak
    mask = normalized >= level
    if normalized.shape != (height, width):
        normalized = np.clip(cv2.resize(normalized, (width, height), interpolation=cv2.INTER_LINEAR), 0.0, 1.0)
        mask = cv2.resize(mask.astype(np.uint8), (width, height), interpolation=cv2.INTER_NEAREST).astype(bool)
    return CamHeatmap(raw_map, normalized, mask)


@dataclass
class ActivationMaximization:
    image: np.ndarray
    initial_loss: float
    trace: list


def activation_maximization(net, layer, filter_index, steps=AM_STEPS, step_size=AM_STEP_SIZE, seed=0):
    """Gradient descent on the input to maximise the summed response of one filter."""
    stop = net.index_of(layer) if isinstance(layer, str) else int(layer)
    channels = net.output_shapes()[stop][-1]
    if not 0 <= filter_index < channels:
        raise DataError(f"filter {filter_index} out of range for {channels} channels in {net.layers[stop].name}")
    rng = np.random.default_rng(seed)
    x = np.clip(rng.normal(AM_INIT_MEAN, AM_INIT_STD, size=(1,) + net.input_shape), 0.0, 1.0).astype(net.dtype)

    def loss_and_grad(image, need_grad=True):
        record = net.forward(image, until=stop)
        value = -float(record.output[..., filter_index].sum())
        if not need_grad:
            return value, None
        upstream = np.zeros_like(record.output)
        upstream[..., filter_index] = -1.0
        return value, net.backward(record, upstream, need_param_grads=False).input_grad

    initial_loss, _ = loss_and_grad(x, need_grad=False)
    trace = []
    for _ in range(steps):
        _, grad = loss_and_grad(x)
        x = np.clip(x - net.dtype.type(step_size) * grad, 0.0, 1.0)
        trace.append(loss_and_grad(x, need_grad=False)[0])
    return ActivationMaximization(image=x[0], initial_loss=initial_loss, trace=trace)
