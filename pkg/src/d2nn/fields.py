"""Field/grid data model and input-object encoding.

All lengths are expressed in units of the illumination wavelength
(lambda == 1). A grid sample is a square cell of side ``dx``; the default
pitch of 0.53 matches the neuron size used throughout.
"""

from dataclasses import dataclass

import numpy as np

DEFAULT_DX = 0.53


@dataclass(frozen=True)
class GridSpec:
    """Uniform 2-D sampling grid. Side length along x is n_x * dx."""

    n_x: int
    n_y: int
    dx: float = DEFAULT_DX

    def __post_init__(self):
        if self.n_x < 1 or self.n_y < 1:
            raise ValueError("grid must have at least one sample per axis")
        if self.dx <= 0:
            raise ValueError("sample pitch must be positive")

    @property
    def shape(self):
        return (self.n_y, self.n_x)

    @property
    def cell_area(self):
        return self.dx * self.dx

    def coords(self):
        """Centered sample-center coordinates (x, y) in wavelengths."""
        x = (np.arange(self.n_x) - (self.n_x - 1) / 2.0) * self.dx
        y = (np.arange(self.n_y) - (self.n_y - 1) / 2.0) * self.dx
        return x, y


@dataclass(frozen=True)
class ComplexField:
    """Sampled complex optical amplitude on a GridSpec."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != self.grid.shape:
            raise ValueError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", v)


def make_field(grid, values, dtype=np.complex128):
    values = np.ascontiguousarray(values, dtype=dtype)
    return ComplexField(grid, values)


AMPLITUDE = "amplitude"
PHASE = "phase"
_ENCODINGS = (AMPLITUDE, PHASE)


def object_upsample_factor(grid, image_shape):
    """Integer replication factor embedding the object in the grid."""
    h, w = image_shape
    factor = min(grid.n_y // h, grid.n_x // w)
    if factor < 1:
        raise ValueError(f"object {image_shape} does not fit grid {grid.shape}")
    return factor


def encode_object_amplitude(image, grid):
    """Upsampled object pixel values on the full grid (background 0)."""
    image = np.asarray(image, dtype=np.float64)
    factor = object_upsample_factor(grid, image.shape)
    big = np.repeat(np.repeat(image, factor, axis=0), factor, axis=1)
    canvas = np.zeros(grid.shape)
    oy = (grid.n_y - big.shape[0]) // 2
    ox = (grid.n_x - big.shape[1]) // 2
    canvas[oy:oy + big.shape[0], ox:ox + big.shape[1]] = big
    return canvas


def encode_input(image, mode, grid, dtype=np.complex128):
    """Encode a grayscale image in [0,1] as an input field.

    amplitude mode: u = p with zero phase; background is opaque (u = 0).
    phase mode: u = exp(j 2 pi p); background is transparent (u = 1).
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError("image must be 2-D")
    if image.min() < 0.0 or image.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    if mode not in _ENCODINGS:
        raise ValueError(f"unknown encoding mode {mode!r}")

    if mode == AMPLITUDE:
        values = encode_object_amplitude(image, grid)
        return make_field(grid, values, dtype=dtype)

    factor = object_upsample_factor(grid, image.shape)
    big = np.repeat(np.repeat(image, factor, axis=0), factor, axis=1)
    phase = np.zeros(grid.shape)
    oy = (grid.n_y - big.shape[0]) // 2
    ox = (grid.n_x - big.shape[1]) // 2
    phase[oy:oy + big.shape[0], ox:ox + big.shape[1]] = big
    return make_field(grid, np.exp(2j * np.pi * phase), dtype=dtype)


def encode_batch(images, mode, grid, dtype=np.complex64):
    """Vectorized encode_input for a stack of images (B, H, W)."""
    images = np.asarray(images, dtype=np.float64)
    b, h, w = images.shape
    factor = object_upsample_factor(grid, (h, w))
    big = np.repeat(np.repeat(images, factor, axis=1), factor, axis=2)
    oy = (grid.n_y - big.shape[1]) // 2
    ox = (grid.n_x - big.shape[2]) // 2
    if mode == AMPLITUDE:
        out = np.zeros((b,) + grid.shape, dtype=dtype)
        out[:, oy:oy + big.shape[1], ox:ox + big.shape[2]] = big
    elif mode == PHASE:
        phase = np.zeros((b,) + grid.shape)
        phase[:, oy:oy + big.shape[1], ox:ox + big.shape[2]] = big
        out = np.exp(2j * np.pi * phase).astype(dtype)
    else:
        raise ValueError(f"unknown encoding mode {mode!r}")
    return out


def total_power(field):
    """Sum of |u|^2 dx^2 over all samples."""
    return float(np.sum(np.abs(field.values) ** 2) * field.grid.cell_area)
