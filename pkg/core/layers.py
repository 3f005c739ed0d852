"""Layer zoo for the numpy network engine.

Image activations are channels-last, (batch, height, width, channels);
vector activations are (batch, features). Every layer returns a cache from
forward that its backward consumes.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from core.errors import ShapeError, ConfigError


class Layer:
    kind = None

    def __init__(self, name=None, frozen=False):
        self.name = name or self.kind
        self.frozen = bool(frozen)
        self.params = {}

    @property
    def has_params(self):
        return bool(self.params)

    def config(self):
        return {}

    def spec(self):
        return {"kind": self.kind, "name": self.name, "frozen": self.frozen, "config": self.config()}

    def output_shape(self, input_shape):
        return tuple(input_shape)

    def build(self, input_shape, rng, dtype):
        pass

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, dy, cache, need_param_grads=True):
        raise NotImplementedError

    def signature(self, cache):
        """Discrete choices made in forward (ReLU pattern, pooling argmax)."""
        return None

    def _param_grads(self, need_param_grads, **computed):
        if not need_param_grads:
            return {}
        if self.frozen:
            return {name: np.zeros_like(value) for name, value in self.params.items()}
        return {name: fn() for name, fn in computed.items()}

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r}, frozen={self.frozen})"


def _require_image(layer, input_shape):
    if len(input_shape) != 3:
        raise ShapeError(layer.name, f"expects an image input (height, width, channels), got {tuple(input_shape)}")


def _require_vector(layer, input_shape):
    if len(input_shape) != 1:
        raise ShapeError(layer.name, f"expects a flat vector input, got {tuple(input_shape)}; "
                                     "add flatten or global pooling first")


def _he_normal(rng, shape, fan_in, dtype):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape).astype(dtype)


class Conv2D(Layer):
    kind = "conv2d"

    def __init__(self, filters, kernel_height=3, kernel_width=3, stride=1, padding="same", name=None, frozen=False):
        super().__init__(name, frozen)
        if padding not in ("same", "valid"):
            raise ConfigError(f"unknown padding mode {padding!r}")
        if min(filters, kernel_height, kernel_width, stride) < 1:
            raise ConfigError(f"{self.name}: conv2d sizes must be positive")
        self.filters = int(filters)
        self.kernel_height = int(kernel_height)
        self.kernel_width = int(kernel_width)
        self.stride = int(stride)
        self.padding = padding

    def config(self):
        return {"filters": self.filters, "kernel_height": self.kernel_height,
                "kernel_width": self.kernel_width, "stride": self.stride, "padding": self.padding}

    def _pads(self, height, width):
        if self.padding == "valid":
            return (0, 0), (0, 0)
        pads = []
        for size, kernel in ((height, self.kernel_height), (width, self.kernel_width)):
            out = -(-size // self.stride)
            total = max((out - 1) * self.stride + kernel - size, 0)
            pads.append((total // 2, total - total // 2))
        return tuple(pads)

    def output_shape(self, input_shape):
        _require_image(self, input_shape)
        height, width, _ = input_shape
        (top, bottom), (left, right) = self._pads(height, width)
        out_h = (height + top + bottom - self.kernel_height) // self.stride + 1
        out_w = (width + left + right - self.kernel_width) // self.stride + 1
        if out_h < 1 or out_w < 1:
            raise ShapeError(self.name, f"kernel larger than input {tuple(input_shape)}")
        return (out_h, out_w, self.filters)

    def build(self, input_shape, rng, dtype):
        channels = input_shape[-1]
        fan_in = self.kernel_height * self.kernel_width * channels
        shape = (self.kernel_height, self.kernel_width, channels, self.filters)
        self.params = {"W": _he_normal(rng, shape, fan_in, dtype), "b": np.zeros(self.filters, dtype=dtype)}

    def _weight_matrix(self):
        W = self.params["W"]
        return W.transpose(2, 0, 1, 3).reshape(-1, self.filters)

    def forward(self, x, training=False, rng=None):
        n, height, width, channels = x.shape
        (top, bottom), (left, right) = self._pads(height, width)
        if top or bottom or left or right:
            padded = np.pad(x, ((0, 0), (top, bottom), (left, right), (0, 0)))
        else:
            padded = x
        windows = sliding_window_view(padded, (self.kernel_height, self.kernel_width), axis=(1, 2))
        windows = windows[:, ::self.stride, ::self.stride]
        out_h, out_w = windows.shape[1:3]
        cols = windows.reshape(n * out_h * out_w, channels * self.kernel_height * self.kernel_width)
        y = cols @ self._weight_matrix() + self.params["b"]
        cache = (cols, padded.shape, (top, left), (height, width))
        return y.reshape(n, out_h, out_w, self.filters), cache

    def backward(self, dy, cache, need_param_grads=True):
        cols, padded_shape, (top, left), (height, width) = cache
        n, out_h, out_w, _ = dy.shape
        channels = padded_shape[-1]
        flat_dy = dy.reshape(-1, self.filters)

        def weight_grad():
            grad = cols.T @ flat_dy
            return grad.reshape(channels, self.kernel_height, self.kernel_width, self.filters).transpose(1, 2, 0, 3)

        grads = self._param_grads(need_param_grads, W=weight_grad, b=lambda: flat_dy.sum(axis=0))

        dcols = (flat_dy @ self._weight_matrix().T).reshape(
            n, out_h, out_w, channels, self.kernel_height, self.kernel_width)
        dpadded = np.zeros(padded_shape, dtype=dy.dtype)
        s = self.stride
        for i in range(self.kernel_height):
            for j in range(self.kernel_width):
                dpadded[:, i:i + s * (out_h - 1) + 1:s, j:j + s * (out_w - 1) + 1:s, :] += dcols[..., i, j]
        dx = dpadded[:, top:top + height, left:left + width, :]
        return dx, grads


class MaxPool2D(Layer):
    kind = "max_pool2d"

    def __init__(self, window=2, stride=2, name=None, frozen=False):
        super().__init__(name, frozen)
        self.window = int(window)
        self.stride = int(stride)

    def config(self):
        return {"window": self.window, "stride": self.stride}

    def output_shape(self, input_shape):
        _require_image(self, input_shape)
        height, width, channels = input_shape
        if height < self.window or width < self.window:
            raise ShapeError(self.name, f"pooling window {self.window} larger than input {tuple(input_shape)}")
        return ((height - self.window) // self.stride + 1, (width - self.window) // self.stride + 1, channels)

    def forward(self, x, training=False, rng=None):
        p = self.window
        windows = sliding_window_view(x, (p, p), axis=(1, 2))[:, ::self.stride, ::self.stride]
        flat = windows.reshape(*windows.shape[:4], p * p)
        # argmax keeps the first maximum in scan order
        index = flat.argmax(axis=-1)
        y = np.take_along_axis(flat, index[..., None], axis=-1)[..., 0]
        return y, (x.shape, index)

    def backward(self, dy, cache, need_param_grads=True):
        x_shape, index = cache
        n, out_h, out_w, channels = dy.shape
        p, s = self.window, self.stride
        dx = np.zeros(x_shape, dtype=dy.dtype)
        if s == p:
            onehot = np.arange(p * p) == index[..., None]
            blocks = (onehot * dy[..., None]).reshape(n, out_h, out_w, channels, p, p)
            blocks = blocks.transpose(0, 1, 4, 2, 5, 3).reshape(n, out_h * p, out_w * p, channels)
            dx[:, :out_h * p, :out_w * p, :] = blocks
        else:
            di, dj = np.divmod(index, p)
            rows = np.arange(out_h)[None, :, None, None] * s + di
            cols = np.arange(out_w)[None, None, :, None] * s + dj
            batch = np.arange(n)[:, None, None, None]
            chans = np.arange(channels)[None, None, None, :]
            np.add.at(dx, (batch, rows, cols, chans), dy)
        return dx, {}

    def signature(self, cache):
        return cache[1]


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False, rng=None):
        mask = x > 0
        return x * mask, mask

    def backward(self, dy, cache, need_param_grads=True):
        return dy * cache, {}

    def signature(self, cache):
        return cache


class GlobalMaxPool(Layer):
    kind = "global_max_pool"

    def output_shape(self, input_shape):
        _require_image(self, input_shape)
        return (input_shape[-1],)

    def forward(self, x, training=False, rng=None):
        n, height, width, channels = x.shape
        flat = x.reshape(n, height * width, channels)
        index = flat.argmax(axis=1)
        y = np.take_along_axis(flat, index[:, None, :], axis=1)[:, 0, :]
        return y, (x.shape, index)

    def backward(self, dy, cache, need_param_grads=True):
        x_shape, index = cache
        n, height, width, channels = x_shape
        dx = np.zeros((n, height * width, channels), dtype=dy.dtype)
        np.put_along_axis(dx, index[:, None, :], dy[:, None, :], axis=1)
        return dx.reshape(x_shape), {}

    def signature(self, cache):
        return cache[1]


class GlobalAvgPool(Layer):
    kind = "global_avg_pool"

    def output_shape(self, input_shape):
        _require_image(self, input_shape)
        return (input_shape[-1],)

    def forward(self, x, training=False, rng=None):
        return x.mean(axis=(1, 2)), x.shape

    def backward(self, dy, cache, need_param_grads=True):
        n, height, width, channels = cache
        dx = np.broadcast_to(dy[:, None, None, :] / (height * width), cache)
        return np.array(dx), {}


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward(self, x, training=False, rng=None):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, cache, need_param_grads=True):
        return dy.reshape(cache), {}


class FullyConnected(Layer):
    kind = "fully_connected"

    def __init__(self, units, name=None, frozen=False):
        super().__init__(name, frozen)
        if units < 1:
            raise ConfigError(f"{self.name}: fully_connected needs at least one unit")
        self.units = int(units)

    def config(self):
        return {"units": self.units}

    def output_shape(self, input_shape):
        _require_vector(self, input_shape)
        return (self.units,)

    def build(self, input_shape, rng, dtype):
        fan_in = input_shape[0]
        self.params = {"W": _he_normal(rng, (fan_in, self.units), fan_in, dtype),
                       "b": np.zeros(self.units, dtype=dtype)}

    def forward(self, x, training=False, rng=None):
        return x @ self.params["W"] + self.params["b"], x

    def backward(self, dy, cache, need_param_grads=True):
        grads = self._param_grads(need_param_grads, W=lambda: cache.T @ dy, b=lambda: dy.sum(axis=0))
        return dy @ self.params["W"].T, grads


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, rate=0.5, name=None, frozen=False):
        super().__init__(name, frozen)
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"{self.name}: dropout rate must lie in [0, 1), got {rate}")
        self.rate = float(rate)

    def config(self):
        return {"rate": self.rate}

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0.0:
            return x, None
        if rng is None:
            raise ValueError(f"{self.name}: training-mode dropout needs a random generator")
        # inverted dropout: scale at train time, identity at inference
        mask = (rng.random(x.shape) >= self.rate).astype(x.dtype) / x.dtype.type(1.0 - self.rate)
        return x * mask, mask

    def backward(self, dy, cache, need_param_grads=True):
        if cache is None:
            return dy, {}
        return dy * cache, {}


class Softmax(Layer):
    kind = "softmax"

    def output_shape(self, input_shape):
        _require_vector(self, input_shape)
        return tuple(input_shape)

    def forward(self, x, training=False, rng=None):
        shifted = np.exp(x - x.max(axis=-1, keepdims=True))
        y = shifted / shifted.sum(axis=-1, keepdims=True)
        return y, y

    def backward(self, dy, cache, need_param_grads=True):
        y = cache
        return y * (dy - (dy * y).sum(axis=-1, keepdims=True)), {}


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x, training=False, rng=None):
        e = np.exp(-np.abs(x))
        y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype)
        return y, y

    def backward(self, dy, cache, need_param_grads=True):
        return dy * cache * (1.0 - cache), {}


LAYER_KINDS = {cls.kind: cls for cls in (Conv2D, MaxPool2D, ReLU, GlobalMaxPool, GlobalAvgPool,
                                         Flatten, FullyConnected, Dropout, Softmax, Sigmoid)}

OUTPUT_ACTIVATIONS = ("softmax", "sigmoid")
GLOBAL_POOLING = ("global_max_pool", "global_avg_pool")


def layer_from_spec(spec):
    kind = spec.get("kind")
    if kind not in LAYER_KINDS:
        raise ConfigError(f"unknown layer kind {kind!r}")
    return LAYER_KINDS[kind](name=spec.get("name"), frozen=spec.get("frozen", False), **spec.get("config", {}))
