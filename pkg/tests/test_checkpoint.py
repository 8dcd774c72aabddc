import numpy as np
import pytest

from sfl import checkpoint
from sfl.checkpoint import CheckpointError


def test_roundtrip(tmp_path):
    arrays = {"a": np.arange(6.0).reshape(2, 3), "b": np.array([1, 2, 3]),
              "scalar": np.array(4.5), "empty": np.zeros((0, 2))}
    meta = {"config_hash": "abc", "nested": {"x": 1}}
    path = tmp_path / "c.sflc"
    checkpoint.save(path, arrays, meta)
    back, m = checkpoint.load(path)
    assert m == meta and set(back) == set(arrays)
    for k in arrays:
        np.testing.assert_array_equal(back[k], arrays[k])
        assert back[k].shape == arrays[k].shape


def test_bytes_are_deterministic():
    arrays = {"x": np.linspace(0, 1, 5), "y": np.array([True, False])}
    assert checkpoint.dumps(arrays, {"k": 1}) == checkpoint.dumps(dict(arrays), {"k": 1})
    assert checkpoint.loads(checkpoint.dumps(arrays))[0]["y"].tolist() == [1, 0]


def test_corrupt_inputs():
    data = checkpoint.dumps({"x": np.ones(10)})
    with pytest.raises(CheckpointError):
        checkpoint.loads(b"NOTACKPT" + data[8:])
    with pytest.raises(CheckpointError):
        checkpoint.loads(data[:-8])
    bad_version = data[:8] + (99).to_bytes(4, "little") + data[12:]
    with pytest.raises(CheckpointError):
        checkpoint.loads(bad_version)
    with pytest.raises(CheckpointError):
        checkpoint.dumps({"s": np.array(["text"])})
