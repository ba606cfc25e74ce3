import numpy as np
import pytest

from d2nn.checkpoint import (MAGIC, Checkpoint, CheckpointError, from_model,
                             load_checkpoint, save_checkpoint)
from d2nn.layers import COMPLEX, PHASE_ONLY, RELU_NORM, SIGMOID, build_model


@pytest.fixture
def model(grid16, rng):
    model = build_model(grid16, 2, 3.0, COMPLEX, SIGMOID)
    for layer in model.layers:
        layer.alpha = rng.normal(size=grid16.shape)
        layer.beta = rng.normal(size=grid16.shape)
    return model


def test_round_trip_preserves_model(model, tmp_path):
    ckpt = from_model(model, {"epoch": 3, "val_accuracy": 0.5})
    path = tmp_path / "m.ckpt"
    save_checkpoint(ckpt, path)
    loaded = load_checkpoint(path)
    assert loaded.metadata == ckpt.metadata
    rebuilt = loaded.to_model()
    assert rebuilt.grid == model.grid
    assert rebuilt.hop_distances() == model.hop_distances()
    for a, b in zip(rebuilt.layers, model.layers):
        assert np.array_equal(a.alpha, b.alpha)
        assert np.array_equal(a.beta, b.beta)


def test_save_load_save_byte_identical(model, tmp_path):
    ckpt = from_model(model, {"val_accuracy": 0.25})
    p1 = tmp_path / "a.ckpt"
    p2 = tmp_path / "b.ckpt"
    save_checkpoint(ckpt, p1)
    save_checkpoint(load_checkpoint(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_electronic_section_round_trip(model, tmp_path, rng):
    ckpt = from_model(model, {})
    ckpt.electronic = {"net.fc.w": rng.normal(size=(4, 10)),
                       "net.fc.b": np.zeros(10),
                       "net.bn.scale": np.ones(4)}
    path = tmp_path / "h.ckpt"
    save_checkpoint(ckpt, path)
    loaded = load_checkpoint(path)
    assert set(loaded.electronic) == set(ckpt.electronic)
    for k in ckpt.electronic:
        assert np.array_equal(loaded.electronic[k], ckpt.electronic[k])


def test_header_starts_with_magic(model, tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(from_model(model, {}), path)
    assert path.read_bytes()[:8] == MAGIC


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 64)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_truncation_rejected(model, tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(from_model(model, {}), path)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 100])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_trailing_bytes_rejected(model, tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(from_model(model, {}), path)
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_unsupported_version_rejected(model, tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(from_model(model, {}), path)
    blob = bytearray(path.read_bytes())
    blob[8] = 99
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_phase_only_metadata(grid16, tmp_path):
    model = build_model(grid16, 1, 2.0, PHASE_ONLY, RELU_NORM)
    path = tmp_path / "p.ckpt"
    save_checkpoint(from_model(model, {}), path)
    loaded = load_checkpoint(path)
    assert loaded.metadata["modulation_mode"] == PHASE_ONLY
    assert loaded.metadata["parameterization"] == RELU_NORM
    assert loaded.metadata["n_layers"] == 1
