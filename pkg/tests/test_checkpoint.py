import numpy as np
import pytest

from palcas.checkpoint import (MAGIC, checkpoint_size, load_checkpoint,
                               save_checkpoint)
from palcas.errors import SchemaError


@pytest.fixture
def tensors():
    rng = np.random.default_rng(0)
    return {
        "q.l0.W": rng.normal(size=(4, 8)),
        "q.l0.b": rng.normal(size=8),
        "p.out.W": rng.normal(size=(8, 1)),
        "scalarish": rng.normal(size=(1,)),
    }


def test_roundtrip(tmp_path, tensors):
    path = tmp_path / "w.ckpt"
    save_checkpoint(path, "sig v1", tensors)
    signature, loaded = load_checkpoint(path)
    assert signature == "sig v1"
    assert set(loaded) == set(tensors)
    for name in tensors:
        assert np.array_equal(loaded[name], tensors[name])
        assert loaded[name].dtype == np.float64


def test_deterministic_bytes(tmp_path, tensors):
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(a, "sig", tensors)
    save_checkpoint(b, "sig", dict(reversed(list(tensors.items()))))
    assert a.read_bytes() == b.read_bytes()


def test_size_oracle(tmp_path, tensors):
    # header + per-tensor (4 + name + 4 + 4*rank) + 8 bytes per element
    path = tmp_path / "w.ckpt"
    save_checkpoint(path, "sig", tensors)
    assert path.stat().st_size == checkpoint_size("sig", tensors)
    element_bytes = sum(np.asarray(v).size for v in tensors.values()) * 8
    assert checkpoint_size("sig", tensors) >= element_bytes


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 32)
    with pytest.raises(SchemaError):
        load_checkpoint(path)


def test_truncated_rejected(tmp_path, tensors):
    path = tmp_path / "w.ckpt"
    save_checkpoint(path, "sig", tensors)
    raw = path.read_bytes()
    path.write_bytes(raw[:-5])
    with pytest.raises(SchemaError):
        load_checkpoint(path)


def test_magic_literal(tmp_path, tensors):
    path = tmp_path / "w.ckpt"
    save_checkpoint(path, "sig", tensors)
    assert path.read_bytes()[:10] == MAGIC == b"PALCASCKPT"
