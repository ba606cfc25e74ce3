"""Checkpoint serialization.

Binary layout: 8-byte magic "D2NNCKPT", little-endian u32 version, u32
length-prefixed UTF-8 JSON metadata, then raw little-endian float64 alpha
arrays for all layers in order, then all beta arrays, row-major. Hybrid
checkpoints append one electronic section: u32 length-prefixed JSON array
descriptor followed by the described float64 arrays.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .fields import GridSpec
from .layers import D2NNModel, LayerParams

MAGIC = b"D2NNCKPT"
VERSION = 1


@dataclass
class Checkpoint:
    """Model geometry, latent arrays and training metadata."""

    metadata: dict
    alphas: list
    betas: list
    electronic: dict = field(default_factory=dict)   # name -> float64 array

    @property
    def val_accuracy(self):
        return self.metadata.get("val_accuracy")

    def to_model(self):
        meta = self.metadata
        grid = GridSpec(meta["n_x"], meta["n_y"], meta["dx"])
        layers = [LayerParams(a, b, meta["modulation_mode"], meta["parameterization"])
                  for a, b in zip(self.alphas, self.betas)]
        return D2NNModel(layers, grid, meta["z_in"], meta["delta_z"], meta["z_out"],
                         meta.get("padding_factor", 2))


def from_model(model, metadata):
    meta = dict(metadata)
    meta.update(
        n_x=model.grid.n_x, n_y=model.grid.n_y, dx=model.grid.dx,
        z_in=model.z_in, delta_z=model.delta_z, z_out=model.z_out,
        padding_factor=model.padding_factor,
        n_layers=len(model.layers),
        modulation_mode=model.modulation_mode,
        parameterization=model.parameterization,
    )
    return Checkpoint(meta,
                      [l.alpha.astype(np.float64) for l in model.layers],
                      [l.beta.astype(np.float64) for l in model.layers])


def _dump_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(ckpt, path):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        meta = _dump_json(ckpt.metadata)
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)
        for arr in ckpt.alphas:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        for arr in ckpt.betas:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        if ckpt.electronic:
            names = sorted(ckpt.electronic)
            desc = _dump_json([{"name": n, "shape": list(ckpt.electronic[n].shape)}
                               for n in names])
            fh.write(struct.pack("<I", len(desc)))
            fh.write(desc)
            for n in names:
                fh.write(np.ascontiguousarray(ckpt.electronic[n], dtype="<f8").tobytes())


class CheckpointError(Exception):
    pass


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return data


def load_checkpoint(path):
    with open(path, "rb") as fh:
        if _read_exact(fh, 8, "magic") != MAGIC:
            raise CheckpointError("bad magic: not a checkpoint file")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (meta_len,) = struct.unpack("<I", _read_exact(fh, 4, "metadata length"))
        metadata = json.loads(_read_exact(fh, meta_len, "metadata"))
        shape = (metadata["n_y"], metadata["n_x"])
        count = shape[0] * shape[1]
        n_layers = metadata["n_layers"]
        alphas, betas = [], []
        for dest in (alphas, betas):
            for _ in range(n_layers):
                raw = _read_exact(fh, count * 8, "latent array")
                dest.append(np.frombuffer(raw, dtype="<f8").reshape(shape).copy())
        electronic = {}
        head = fh.read(4)
        if head:
            if len(head) != 4:
                raise CheckpointError("truncated electronic section header")
            (desc_len,) = struct.unpack("<I", head)
            desc = json.loads(_read_exact(fh, desc_len, "electronic descriptor"))
            for entry in desc:
                n = int(np.prod(entry["shape"])) if entry["shape"] else 1
                raw = _read_exact(fh, n * 8, f"electronic array {entry['name']}")
                electronic[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(entry["shape"]).copy()
        trailing = fh.read(1)
        if trailing:
            raise CheckpointError("trailing bytes after checkpoint payload")
    return Checkpoint(metadata, alphas, betas, electronic)
