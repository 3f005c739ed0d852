"""Binary model container.

Layout: magic "FSCV", u32 version, u32 manifest length, UTF-8 JSON manifest,
then every parameter tensor as little-endian float32 in manifest order.
"""

import json
import struct
from pathlib import Path

import numpy as np

from config import MODEL_MAGIC, MODEL_VERSION
from core.errors import ModelFormatError, UnsupportedVersionError, ConfigError, ShapeError
from core.layers import layer_from_spec
from core.network import Network

_HEADER = struct.Struct("<4sII")


def _manifest(net):
    layers = []
    for layer in net.layers:
        entry = layer.spec()
        entry["params"] = [{"name": pname, "shape": list(value.shape)} for pname, value in layer.params.items()]
        layers.append(entry)
    return {
        "input_shape": list(net.input_shape),
        "rng_seed": net.rng_seed,
        "trained": net.trained,
        "metadata": net.metadata,
        "layers": layers,
    }


def serialize(net):
    body = json.dumps(_manifest(net), sort_keys=True).encode("utf-8")
    tensors = [np.ascontiguousarray(value, dtype="<f4").tobytes() for _, _, value in net.parameters()]
    return _HEADER.pack(MODEL_MAGIC, MODEL_VERSION, len(body)) + body + b"".join(tensors)


def deserialize(data):
    data = bytes(data)
    if len(data) < _HEADER.size:
        raise ModelFormatError("truncated model file: header incomplete")
    magic, version, length = _HEADER.unpack_from(data)
    if magic != MODEL_MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}; not a model file")
    if version != MODEL_VERSION:
        raise UnsupportedVersionError(version, MODEL_VERSION)
    start = _HEADER.size
    if len(data) < start + length:
        raise ModelFormatError("truncated model file: manifest incomplete")
    try:
        manifest = json.loads(data[start:start + length].decode("utf-8"))
        specs = manifest["layers"]
        net = Network(manifest["input_shape"], [layer_from_spec(spec) for spec in specs],
                      rng_seed=manifest.get("rng_seed", 0))
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ConfigError, ShapeError) as exc:
        raise ModelFormatError(f"unreadable model manifest: {exc}") from exc

    offset = start + length
    for layer, spec in zip(net.layers, specs):
        if sorted(entry["name"] for entry in spec.get("params", [])) != sorted(layer.params):
            raise ModelFormatError(f"{layer.name}: manifest parameter list does not match the layer")
        for entry in spec.get("params", []):
            shape = tuple(entry["shape"])
            if entry["name"] not in layer.params or layer.params[entry["name"]].shape != shape:
                raise ModelFormatError(f"{layer.name}: manifest parameter {entry['name']} {shape} "
                                       "does not match the layer geometry")
            nbytes = 4 * int(np.prod(shape))
            if len(data) < offset + nbytes:
                raise ModelFormatError(f"truncated model file: tensor {layer.name}.{entry['name']} incomplete")
            layer.params[entry["name"]] = np.frombuffer(data, dtype="<f4", count=nbytes // 4,
                                                        offset=offset).reshape(shape).astype(np.float32)
            offset += nbytes
    if offset != len(data):
        raise ModelFormatError(f"model file has {len(data) - offset} trailing bytes")
    net.trained = bool(manifest.get("trained", False))
    net.metadata = manifest.get("metadata", {})
    return net


def save_model(net, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(serialize(net))
    return path


def load_model(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"model file not found: {path}")
    return deserialize(path.read_bytes())
