"""Sequential network container: shape propagation, forward and backward passes."""

import copy
from dataclasses import dataclass, field

import numpy as np

from core.errors import ShapeError, ConfigError
from core.layers import OUTPUT_ACTIVATIONS


@dataclass
class ForwardRecord:
    """Activations and caches captured by one forward pass.

    activations[0] is the input, activations[i + 1] the output of layer i.
    """
    owner: int
    activations: list
    caches: list

    @property
    def output(self):
        return self.activations[-1]

    def signature(self, layers):
        return [layer.signature(cache) for layer, cache in zip(layers, self.caches)]


@dataclass
class Gradients:
    params: dict = field(default_factory=dict)
    input_grad: np.ndarray = None

    def __getitem__(self, key):
        return self.params[key]

    def __contains__(self, key):
        return key in self.params


class Network:
    def __init__(self, input_shape, layers, rng_seed=0, dtype=np.float32):
        self.input_shape = tuple(int(d) for d in input_shape)
        self.layers = list(layers)
        self.rng_seed = int(rng_seed)
        self.dtype = np.dtype(dtype)
        self.trained = False
        self.metadata = {}

        names = [layer.name for layer in self.layers]
        duplicates = sorted({name for name in names if names.count(name) > 1})
        if duplicates:
            raise ConfigError(f"duplicate layer names: {', '.join(duplicates)}")

        rng = np.random.default_rng(self.rng_seed)
        shape = self.input_shape
        self._shapes = []
        for layer in self.layers:
            in_shape = shape
            shape = layer.output_shape(in_shape)
            layer.build(in_shape, rng, self.dtype)
            self._shapes.append(shape)

    # ---- introspection ----

    @property
    def output_shape(self):
        return self._shapes[-1] if self._shapes else self.input_shape

    def output_shapes(self):
        return list(self._shapes)

    def index_of(self, name):
        for i, layer in enumerate(self.layers):
            if layer.name == name:
                return i
        raise KeyError(f"no layer named {name!r}")

    def layer(self, name):
        return self.layers[self.index_of(name)]

    def parameters(self):
        for layer in self.layers:
            for pname, value in layer.params.items():
                yield layer, pname, value

    def trainable_parameters(self):
        for layer, pname, value in self.parameters():
            if not layer.frozen:
                yield layer, pname, value

    def count_params(self, trainable_only=False):
        source = self.trainable_parameters() if trainable_only else self.parameters()
        return int(sum(value.size for _, _, value in source))

    def summary(self):
        """Rows of (layer name, output shape, parameter count)."""
        rows = []
        for layer, shape in zip(self.layers, self._shapes):
            rows.append((layer.name, shape, int(sum(p.size for p in layer.params.values()))))
        return rows

    def freeze_through(self, name):
        stop = self.index_of(name)
        for layer in self.layers[:stop + 1]:
            layer.frozen = True

    def unfreeze(self):
        for layer in self.layers:
            layer.frozen = False

    def copy(self):
        return copy.deepcopy(self)

    def astype(self, dtype):
        clone = self.copy()
        clone.dtype = np.dtype(dtype)
        for layer in clone.layers:
            layer.params = {k: v.astype(clone.dtype) for k, v in layer.params.items()}
        return clone

    # ---- passes ----

    def _resolve_until(self, until):
        if until is None:
            return len(self.layers) - 1
        if isinstance(until, str):
            return self.index_of(until)
        if not 0 <= until < len(self.layers):
            raise IndexError(f"layer index {until} out of range")
        return int(until)

    def forward(self, x, training=False, rng=None, until=None):
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[1:] != self.input_shape:
            first = self.layers[0].name if self.layers else "input"
            raise ShapeError(first, f"expected input shape {self.input_shape}, got {x.shape[1:]}")
        if training and rng is None:
            rng = np.random.default_rng(self.rng_seed + 1)
        last = self._resolve_until(until)
        activations = [x]
        caches = []
        for layer in self.layers[:last + 1]:
            x, cache = layer.forward(x, training=training, rng=rng)
            activations.append(x)
            caches.append(cache)
        return ForwardRecord(id(self), activations, caches)

    def backward(self, record, upstream, skip_output_activation=False, stop_at=0,
                 need_input_grad=True, need_param_grads=True):
        """Backpropagate ``upstream`` from the recorded output down to layer ``stop_at``.

        With ``skip_output_activation`` the upstream gradient is taken w.r.t. the
        input of the final softmax/sigmoid, i.e. the logits.
        """
        if record.owner != id(self) or len(record.caches) > len(self.layers):
            raise ShapeError("backward", "activation record does not match this network")
        top = len(record.caches) - 1
        if skip_output_activation:
            if self.layers[top].kind not in OUTPUT_ACTIVATIONS:
                raise ShapeError(self.layers[top].name, "is not an output activation and cannot be skipped")
            top -= 1
        g = np.asarray(upstream, dtype=self.dtype)
        if g.shape != record.activations[top + 1].shape:
            name = self.layers[top].name if top >= 0 else "input"
            raise ShapeError(name, f"upstream gradient shape {g.shape} does not match "
                                   f"activation shape {record.activations[top + 1].shape}")

        bottom = stop_at
        if not need_input_grad:
            trainable = [i for i in range(stop_at, top + 1)
                         if self.layers[i].has_params and not self.layers[i].frozen]
            bottom = trainable[0] if (trainable and need_param_grads) else top + 1

        grads = Gradients()
        for i in range(top, bottom - 1, -1):
            layer = self.layers[i]
            g, layer_grads = layer.backward(g, record.caches[i], need_param_grads=need_param_grads)
            for pname, value in layer_grads.items():
                grads.params[(layer.name, pname)] = value

        if need_param_grads:
            for layer, pname, value in self.parameters():
                if layer.frozen and (layer.name, pname) not in grads.params:
                    grads.params[(layer.name, pname)] = np.zeros_like(value)
        if need_input_grad and bottom == stop_at:
            grads.input_grad = g
        return grads

    def predict(self, x, batch_size=64):
        x = np.asarray(x)
        outputs = [self.forward(x[i:i + batch_size]).output for i in range(0, len(x), batch_size)]
        if not outputs:
            return np.zeros((0,) + self.output_shape, dtype=self.dtype)
        return np.concatenate(outputs, axis=0)

    def __repr__(self):
        return f"Network(input_shape={self.input_shape}, layers={[l.name for l in self.layers]})"
