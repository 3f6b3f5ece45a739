from collections import OrderedDict

import numpy as np
import pytest

from rgbd_inpaint import checkpoint as ckpt


def _tensors():
    rng = np.random.default_rng(0)
    return OrderedDict([
        ("a.weight", rng.normal(size=(2, 3)).astype(np.float32)),
        ("b", rng.normal(size=(4,))),
        ("scalar", np.array(3.5)),
        ("ints", np.arange(5, dtype=np.int64)),
    ])


def test_roundtrip(tmp_path):
    path = tmp_path / "c.bin"
    ckpt.save(path, _tensors(), {"iteration": 3, "x": [1, 2]})
    tensors, meta = ckpt.load(path)
    assert meta == {"iteration": 3, "x": [1, 2]}
    for (k1, v1), (k2, v2) in zip(_tensors().items(), tensors.items()):
        assert k1 == k2 and v1.dtype == v2.dtype
        np.testing.assert_array_equal(v1, v2)


def test_save_load_save_identical(tmp_path):
    ckpt.save(tmp_path / "1.bin", _tensors(), {"k": 1})
    t, m = ckpt.load(tmp_path / "1.bin")
    ckpt.save(tmp_path / "2.bin", t, m)
    assert (tmp_path / "1.bin").read_bytes() == (tmp_path / "2.bin").read_bytes()


def test_header_layout():
    buf = ckpt.encode(_tensors(), {})
    assert buf[:8] == b"RGBDCKPT"
    assert int.from_bytes(buf[8:12], "little") == ckpt.VERSION
    assert int.from_bytes(buf[12:16], "little") == len(_tensors()) + 1


def test_truncated_file_is_corrupt(tmp_path):
    buf = ckpt.encode(_tensors(), {})
    for cut in (len(buf) - 1, len(buf) // 2, 10):
        with pytest.raises(ckpt.CorruptCheckpointError):
            ckpt.decode(buf[:cut])


def test_bit_flip_detected():
    buf = bytearray(ckpt.encode(_tensors(), {}))
    buf[40] ^= 0x01
    with pytest.raises(ckpt.CorruptCheckpointError):
        ckpt.decode(bytes(buf))


def test_version_mismatch():
    buf = bytearray(ckpt.encode(_tensors(), {}))
    buf[8:12] = (99).to_bytes(4, "little")
    with pytest.raises(ckpt.VersionMismatchError):
        ckpt.decode(bytes(buf))


def test_unsupported_dtype():
    with pytest.raises(ckpt.CheckpointError):
        ckpt.encode({"c": np.zeros(2, dtype=np.complex64)}, {})
