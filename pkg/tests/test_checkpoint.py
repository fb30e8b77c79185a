import struct

import numpy as np
import pytest

from sadi.checkpoint import load_checkpoint, save_checkpoint
from sadi.errors import CheckpointError


@pytest.fixture
def saved(tmp_path, rng):
    tensors = {
        "w": rng.normal(size=(2, 3, 3, 3)),
        "b": np.zeros(2),
        "s": np.array(1.5),
    }
    path = save_checkpoint(tmp_path / "nested" / "c.ckpt", tensors, {"scale": 12.5, "config": {"seed": 1}})
    return path, tensors


def test_round_trip(saved):
    path, tensors = saved
    loaded, meta = load_checkpoint(path)
    assert list(loaded) == ["w", "b", "s"]
    for name, array in tensors.items():
        assert loaded[name].shape == array.shape
        np.testing.assert_array_equal(loaded[name], array)
    assert meta == {"scale": 12.5, "config": {"seed": 1}}


def test_bad_magic(tmp_path, saved):
    path, _ = saved
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOTACKPT" + path.read_bytes()[8:])
    with pytest.raises(CheckpointError, match="not a checkpoint"):
        load_checkpoint(bad)


def test_unsupported_version(tmp_path, saved):
    path, _ = saved
    data = bytearray(path.read_bytes())
    data[8:12] = struct.pack("<I", 99)
    bad = tmp_path / "v.ckpt"
    bad.write_bytes(bytes(data))
    with pytest.raises(CheckpointError, match="version 99"):
        load_checkpoint(bad)


def test_truncated(tmp_path, saved):
    path, _ = saved
    cut = tmp_path / "cut.ckpt"
    cut.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(cut)


def test_trailing_bytes(tmp_path, saved):
    path, _ = saved
    long = tmp_path / "long.ckpt"
    long.write_bytes(path.read_bytes() + b"\x00\x00")
    with pytest.raises(CheckpointError, match="2 trailing bytes"):
        load_checkpoint(long)
