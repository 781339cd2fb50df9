import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from cocavit import checkpoint
from cocavit.backbone import build_model, get_variant
from cocavit.checkpoint import CheckpointError
from cocavit.numeric import Rng, Tensor, no_grad
from cocavit.train import load_model, save_model
from conftest import assert_bitwise

dtypes = st.sampled_from([np.float32, np.float64, np.int64, np.int32])


@given(st.dictionaries(st.text(min_size=1, max_size=12), st.tuples(dtypes, hnp.array_shapes(min_dims=0, max_dims=4,
                                                                                          max_side=4)),
                       max_size=5),
       st.text(max_size=40), st.integers(0, 2**31 - 1))
def test_round_trip_is_bitwise(specs, config_text, seed):
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, (dt, shape) in specs.items():
        if np.issubdtype(dt, np.floating):
            tensors[name] = rng.standard_normal(shape).astype(dt)
        else:
            tensors[name] = rng.integers(-2**30, 2**30, size=shape).astype(dt)
    back, text = checkpoint.loads(checkpoint.dumps(tensors, config_text))
    assert text == config_text
    assert list(back) == list(tensors)
    for k in tensors:
        assert_bitwise(back[k], tensors[k])


def test_layout_is_little_endian():
    blob = checkpoint.dumps({"w": np.array([1.0], np.float32)}, "a = 1")
    assert blob[:4] == b"COCA"
    assert struct.unpack("<I", blob[4:8])[0] == checkpoint.VERSION
    assert struct.unpack("<I", blob[8:12])[0] == 5
    big = checkpoint.dumps({"w": np.array([1.0], ">f4")})
    assert checkpoint.loads(big)[0]["w"].tobytes() == np.array([1.0], "<f4").tobytes()


def test_version_mismatch_and_corruption_are_errors():
    blob = bytearray(checkpoint.dumps({"w": np.zeros(3)}))
    bad = bytearray(blob)
    bad[4:8] = struct.pack("<I", 99)
    with pytest.raises(CheckpointError, match="version"):
        checkpoint.loads(bytes(bad))
    with pytest.raises(CheckpointError, match="magic"):
        checkpoint.loads(b"XXXX" + bytes(blob[4:]))
    with pytest.raises(CheckpointError, match="truncated"):
        checkpoint.loads(bytes(blob[:-1]))
    with pytest.raises(CheckpointError, match="trailing"):
        checkpoint.loads(bytes(blob) + b"\0")
    with pytest.raises(CheckpointError):
        checkpoint.dumps({"c": np.zeros(2, np.complex64)})


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_model_round_trip_reproduces_logits(tmp_path, dtype):
    model = build_model(get_variant("nano"), Rng(11), dtype)
    x = Tensor(Rng(12).normal((3, 3, 32, 32)).astype(dtype))
    path = tmp_path / "m.ckpt"
    save_model(path, model)
    again = load_model(path)
    assert again.config == model.config and again.dtype == model.dtype
    with no_grad():
        assert_bitwise(again(x).logits.data, model(x).logits.data)


def test_load_state_dict_is_strict():
    model = build_model(get_variant("nano"), Rng(0))
    state = model.state_dict()
    state.pop("head.bias")
    with pytest.raises(KeyError):
        model.load_state_dict(state)
