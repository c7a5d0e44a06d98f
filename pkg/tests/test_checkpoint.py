"""Round-trip and corruption behavior of the binary array archive."""
import os
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inon.autograd import CheckpointError, load_arrays, save_arrays


def test_round_trip_values_and_meta(tmp_path):
    path = tmp_path / "model.bin"
    arrays = {
        "layer.weight": np.random.default_rng(0).normal(size=(3, 4)).astype(np.float32),
        "layer.bias": np.zeros(3, dtype=np.float32),
        "scalar": np.float32(2.5).reshape(()),
    }
    save_arrays(path, arrays, {"kind": "test", "epoch": "7"})
    loaded, meta = load_arrays(path)
    assert meta == {"kind": "test", "epoch": "7"}
    assert set(loaded) == set(arrays)
    for k in arrays:
        np.testing.assert_array_equal(loaded[k], arrays[k])
        assert loaded[k].dtype == np.float32


def test_name_order_preserved(tmp_path):
    path = tmp_path / "m.bin"
    save_arrays(path, {"b": np.ones(1), "a": np.ones(1), "c": np.ones(1)})
    loaded, _ = load_arrays(path)
    assert list(loaded) == ["b", "a", "c"]


def test_float64_input_stored_as_float32(tmp_path):
    path = tmp_path / "m.bin"
    save_arrays(path, {"w": np.array([1.0, 2.0], dtype=np.float64)})
    loaded, _ = load_arrays(path)
    assert loaded["w"].dtype == np.float32


def test_empty_archive(tmp_path):
    path = tmp_path / "m.bin"
    save_arrays(path, {})
    loaded, meta = load_arrays(path)
    assert loaded == {} and meta == {}


def test_rewrite_is_byte_identical(tmp_path):
    arrays = {"w": np.arange(6, dtype=np.float32).reshape(2, 3)}
    p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
    save_arrays(p1, arrays, {"k": "v"})
    save_arrays(p2, arrays, {"k": "v"})
    assert p1.read_bytes() == p2.read_bytes()


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "m.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(CheckpointError, match="magic"):
        load_arrays(path)


def test_unknown_version_rejected(tmp_path):
    path = tmp_path / "m.bin"
    save_arrays(path, {"w": np.ones(1)})
    raw = bytearray(path.read_bytes())
    raw[4] = 9
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="version"):
        load_arrays(path)


def test_truncated_archive_rejected(tmp_path):
    path = tmp_path / "m.bin"
    save_arrays(path, {"w": np.ones(100)})
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(CheckpointError, match="truncated"):
        load_arrays(path)


def test_trailing_garbage_rejected(tmp_path):
    path = tmp_path / "m.bin"
    save_arrays(path, {"w": np.ones(2)})
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(CheckpointError, match="trailing"):
        load_arrays(path)


def test_duplicate_name_rejected(tmp_path):
    # hand-assemble an archive with the same name twice
    def s(x):
        b = x.encode()
        return struct.pack("<I", len(b)) + b

    body = b"TNSR" + struct.pack("<B", 1) + struct.pack("<I", 0) + struct.pack("<I", 2)
    one = s("w") + struct.pack("<I", 1) + struct.pack("<I", 1) + struct.pack("<f", 0.0)
    path = tmp_path / "m.bin"
    path.write_bytes(body + one + one)
    with pytest.raises(CheckpointError, match="duplicate"):
        load_arrays(path)


def test_failed_write_leaves_no_partial_file(tmp_path):
    path = tmp_path / "m.bin"

    class Hostile:
        # looks enough like an array to pass through until serialization
        def __array__(self, dtype=None):
            raise RuntimeError("boom")

    with pytest.raises(Exception):
        save_arrays(path, {"w": Hostile()})
    assert not path.exists()
    assert [f for f in os.listdir(tmp_path) if f.startswith(".ckpt-")] == []


def test_overwrite_replaces_whole_file(tmp_path):
    path = tmp_path / "m.bin"
    save_arrays(path, {"big": np.ones(1000)})
    save_arrays(path, {"small": np.ones(1)})
    loaded, _ = load_arrays(path)
    assert list(loaded) == ["small"]


names = st.text(
    alphabet=st.characters(whitelist_categories=("Ll", "Lu", "Nd"), whitelist_characters="._-"),
    min_size=1, max_size=20,
)


@given(
    st.dictionaries(
        names,
        st.tuples(st.integers(0, 3), st.integers(0, 2**16)),
        max_size=5,
    )
)
@settings(max_examples=30, deadline=None)
def test_round_trip_arbitrary_shapes(tmp_path_factory, specs):
    tmp = tmp_path_factory.mktemp("ckpt")
    arrays = {}
    for name, (ndim, seed) in specs.items():
        rng = np.random.default_rng(seed)
        shape = tuple(int(rng.integers(1, 5)) for _ in range(ndim))
        arrays[name] = rng.normal(size=shape).astype(np.float32)
    path = tmp / "m.bin"
    save_arrays(path, arrays)
    loaded, _ = load_arrays(path)
    assert list(loaded) == list(arrays)
    for k in arrays:
        np.testing.assert_array_equal(loaded[k], arrays[k])
        assert loaded[k].shape == arrays[k].shape
