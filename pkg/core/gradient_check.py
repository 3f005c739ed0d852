"""Central-difference verification of analytic gradients."""

from dataclasses import dataclass, field

import numpy as np

from config import GRADCHECK_EPSILON, GRADCHECK_SAMPLES, GRADCHECK_THRESHOLD, GRADCHECK_FLOOR


@dataclass
class LayerCheck:
    layer_name: str
    max_relative_error: float
    samples: int
    skipped: int


@dataclass
class GradientCheckReport:
    threshold: float
    layers: list = field(default_factory=list)

    @property
    def max_error(self):
        return max((check.max_relative_error for check in self.layers), default=0.0)

    @property
    def passed(self):
        return self.max_error < self.threshold

    def errors(self):
        return {check.layer_name: check.max_relative_error for check in self.layers}


def projection_loss(output_shape, seed=0):
    """Scalar loss sum(r * y) for a fixed random projection r."""
    r = np.random.default_rng(seed).standard_normal(output_shape)

    def loss(output):
        return float((r * output).sum()), r

    return loss


def relative_error(analytic, numeric, floor=GRADCHECK_FLOOR):
    return abs(analytic - numeric) / max(abs(analytic) + abs(numeric), floor)


def _same_signature(a, b):
    return all((x is None and y is None) or np.array_equal(x, y) for x, y in zip(a, b))


def gradient_check(net, x, loss=None, epsilon=GRADCHECK_EPSILON, samples=GRADCHECK_SAMPLES,
                   threshold=GRADCHECK_THRESHOLD, seed=0, training=False, check_input=False):
    """Compare backprop gradients of ``net`` with central differences.

    Runs on a float64 copy. Up to ``samples`` parameters per trainable layer
    are perturbed; samples whose +/- epsilon probes change a ReLU pattern or a
    pooling argmax sit on a kink and are resampled.
    """
    net64 = net.astype(np.float64)
    x = np.array(x, dtype=np.float64)
    if x.shape == net64.input_shape:
        x = x[None]
    rng = np.random.default_rng(seed)

    def evaluate(inputs):
        record = net64.forward(inputs, training=training, rng=np.random.default_rng(seed + 1))
        value, grad = loss(record.output)
        return value, grad, record.signature(net64.layers), record

    if loss is None:
        loss = projection_loss(net64.forward(x).output.shape, seed)

    _, upstream, base_signature, record = evaluate(x)
    grads = net64.backward(record, upstream)
    report = GradientCheckReport(threshold)

    def probe(array, flat_index, analytic):
        flat = array.reshape(-1)
        original = flat[flat_index]
        flat[flat_index] = original + epsilon
        plus, _, sig_plus, _ = evaluate(x)
        flat[flat_index] = original - epsilon
        minus, _, sig_minus, _ = evaluate(x)
        flat[flat_index] = original
        if not (_same_signature(sig_plus, base_signature) and _same_signature(sig_minus, base_signature)):
            return None
        numeric = (plus - minus) / (2 * epsilon)
        return relative_error(float(analytic), numeric)

    def check(name, candidates):
        worst, used, skipped = 0.0, 0, 0
        for array, analytic, flat_index in candidates:
            if used >= samples:
                break
            err = probe(array, flat_index, analytic.reshape(-1)[flat_index])
            if err is None:
                skipped += 1
                continue
            worst = max(worst, err)
            used += 1
        report.layers.append(LayerCheck(name, worst, used, skipped))

    for layer in net64.layers:
        if not layer.params or layer.frozen:
            continue
        pool = [(pname, i) for pname, value in layer.params.items() for i in range(value.size)]
        order = rng.permutation(len(pool))
        check(layer.name, ((layer.params[pool[k][0]], grads[(layer.name, pool[k][0])], pool[k][1])
                           for k in order))

    if check_input:
        order = rng.permutation(x.size)
        check("input", ((x, grads.input_grad, int(k)) for k in order))
    return report
