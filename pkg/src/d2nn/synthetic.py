"""Procedurally rendered digit dataset in the MNIST container format.

This environment has no copy of the MNIST files and no way to download
them, so the desk-scale training studies fall back to a rendered stand-in:
28x28 grayscale digits produced from fixed glyph bitmaps with randomized
rotation, scale, shift, stroke blur and brightness, written as standard
IDX files so the whole ingestion pipeline is exercised unchanged.
"""

import numpy as np
from scipy import ndimage

_GLYPHS = {
    0: ["01110", "10001", "10001", "10001", "10001", "10001", "01110"],
    1: ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],
    2: ["01110", "10001", "00001", "00010", "00100", "01000", "11111"],
    3: ["11110", "00001", "00001", "01110", "00001", "00001", "11110"],
    4: ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],
    5: ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],
    6: ["00110", "01000", "10000", "11110", "10001", "10001", "01110"],
    7: ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],
    8: ["01110", "10001", "10001", "01110", "10001", "10001", "01110"],
    9: ["01110", "10001", "10001", "01111", "00001", "00010", "01100"],
}


def _glyph_canvas(digit):
    bitmap = np.array([[int(c) for c in row] for row in _GLYPHS[digit]],
                      dtype=np.float64)
    big = np.kron(bitmap, np.ones((3, 4)))       # 21 x 20 strokes
    canvas = np.zeros((28, 28))
    canvas[3:24, 4:24] = big
    return canvas


def render_digit(digit, rng, size=28):
    """One randomized 28x28 rendering of a digit, values in [0,1]."""
    canvas = _glyph_canvas(digit)
    angle = rng.uniform(-40.0, 40.0)
    scale = rng.uniform(0.5, 1.1)
    shift = rng.uniform(-4.0, 4.0, size=2)
    theta = np.deg2rad(angle)
    rot = np.array([[np.cos(theta), -np.sin(theta)],
                    [np.sin(theta), np.cos(theta)]]) / scale
    center = (size - 1) / 2.0
    offset = np.array([center, center]) - rot @ np.array([center, center]) - shift
    img = ndimage.affine_transform(canvas, rot, offset=offset, order=1,
                                   mode="constant", cval=0.0)
    img = ndimage.gaussian_filter(img, sigma=rng.uniform(0.5, 1.1))
    img *= rng.uniform(0.5, 1.0)
    img += rng.normal(0.0, 0.06, img.shape)
    return np.clip(img, 0.0, 1.0)


def render_dataset(n, seed, n_classes=10):
    """n images with a balanced random label stream; returns (images, labels)."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, n_classes, size=n)
    images = np.empty((n, 28, 28), dtype=np.float32)
    for i, lab in enumerate(labels):
        images[i] = render_digit(int(lab), rng)
    return images, labels.astype(np.int64)


def write_idx_dataset(out_dir, n_train=60000, n_test=10000, seed=1234):
    """Emit train/test IDX file pairs mirroring the MNIST naming scheme."""
    from pathlib import Path

    from .dataset import save_idx

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, n, s in (("train", n_train, seed), ("t10k", n_test, seed + 1)):
        images, labels = render_dataset(n, s)
        ip = out_dir / f"{name}-images-idx3-ubyte"
        lp = out_dir / f"{name}-labels-idx1-ubyte"
        save_idx(images, labels, ip, lp)
        paths[name] = (ip, lp)
    return paths
