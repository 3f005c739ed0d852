import struct

import numpy as np
import pytest

from core.errors import ModelFormatError, UnsupportedVersionError
from core.fsconv import build_fsconv
from core.serialization import serialize, deserialize, save_model, load_model


@pytest.fixture
def net():
    net = build_fsconv("GMP_FC", input_side=16, filters=(2, 3, 4), fc_units=6, seed=9)
    net.freeze_through("Conv_1")
    net.trained = True
    net.metadata["note"] = "unit"
    return net


def test_round_trip_is_bit_exact(net, rng):
    restored = deserialize(serialize(net))
    for (la, pa, wa), (lb, pb, wb) in zip(net.parameters(), restored.parameters()):
        assert (la.name, pa) == (lb.name, pb)
        np.testing.assert_array_equal(wa, wb)
    x = rng.random((2, 16, 16, 3))
    np.testing.assert_array_equal(net.predict(x), restored.predict(x))


def test_flags_and_metadata_survive(net):
    restored = deserialize(serialize(net))
    assert restored.trained
    assert restored.metadata["note"] == "unit"
    assert [layer.frozen for layer in restored.layers] == [layer.frozen for layer in net.layers]
    assert [layer.spec() for layer in restored.layers] == [layer.spec() for layer in net.layers]


def test_serialization_is_deterministic(net):
    assert serialize(net) == serialize(net.copy())


def test_truncated_file(net):
    data = serialize(net)
    for cut in (3, 20, len(data) - 1):
        with pytest.raises(ModelFormatError):
            deserialize(data[:cut])


def test_trailing_bytes(net):
    with pytest.raises(ModelFormatError):
        deserialize(serialize(net) + b"\0")


def test_bad_magic(net):
    with pytest.raises(ModelFormatError):
        deserialize(b"XXXX" + serialize(net)[4:])


def test_unsupported_version(net):
    data = serialize(net)
    patched = data[:4] + struct.pack("<I", 2) + data[8:]
    with pytest.raises(UnsupportedVersionError) as info:
        deserialize(patched)
    assert info.value.found == 2


def test_save_and_load(net, tmp_path):
    path = save_model(net, tmp_path / "models" / "grader.fscv")
    assert load_model(path).count_params() == net.count_params()
    with pytest.raises(FileNotFoundError):
        load_model(tmp_path / "missing.fscv")
