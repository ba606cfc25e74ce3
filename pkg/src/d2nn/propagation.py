"""Free-space scalar propagation between parallel planes.

Two propagators are provided: a fast angular-spectrum (transfer function)
propagator used everywhere in the simulator, and a direct Rayleigh-Sommerfeld
summation intended as a slow cross-validation oracle on small grids.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .fields import ComplexField, GridSpec, make_field


@dataclass(frozen=True)
class PropagationPlan:
    """Geometry of one free-space hop: grid, distance and padding."""

    grid: GridSpec
    z: float
    padding_factor: int = 2

    def __post_init__(self):
        if self.z < 0:
            raise ValueError("propagation distance must be nonnegative")
        if self.padding_factor < 2:
            raise ValueError("padding factor must be at least 2")

    @property
    def padded_shape(self):
        return (self.grid.n_y * self.padding_factor,
                self.grid.n_x * self.padding_factor)


@lru_cache(maxsize=64)
def _transfer_function(n_pad_y, n_pad_x, dx, z):
    """H(f) = exp(j 2 pi z sqrt(1 - f^2)), zero on the evanescent band."""
    fx = np.fft.fftfreq(n_pad_x, d=dx)
    fy = np.fft.fftfreq(n_pad_y, d=dx)
    f2 = fy[:, None] ** 2 + fx[None, :] ** 2
    propagating = f2 < 1.0
    fz = np.sqrt(np.maximum(1.0 - f2, 0.0))
    h = np.exp(2j * np.pi * z * fz)
    h[~propagating] = 0.0
    return h


def _asm_raw(values, plan, conjugate_transfer=False):
    """Angular-spectrum hop on raw arrays; leading axes are batch axes."""
    n_y, n_x = plan.grid.shape
    pad_y, pad_x = plan.padded_shape
    h = _transfer_function(pad_y, pad_x, plan.grid.dx, plan.z)
    if conjugate_transfer:
        h = np.conj(h)
    if values.dtype == np.complex64:
        h = h.astype(np.complex64)
    padded = np.zeros(values.shape[:-2] + (pad_y, pad_x), dtype=values.dtype)
    padded[..., :n_y, :n_x] = values
    spectrum = sfft.fft2(padded)
    spectrum *= h
    out = sfft.ifft2(spectrum)
    return np.ascontiguousarray(out[..., :n_y, :n_x])


def asm_propagate(field, plan):
    """Propagate a field by distance plan.z with the angular spectrum method."""
    if field.grid != plan.grid:
        raise ValueError("plan grid does not match field grid")
    if not np.all(np.isfinite(field.values)):
        raise ValueError("non-finite input field")
    return ComplexField(plan.grid, _asm_raw(field.values, plan))


def asm_adjoint(values, plan):
    """Adjoint of the angular-spectrum hop (conjugated transfer function).

    Satisfies <g, ASM u> = <ASM^H g, u> for the padded/cropped operator,
    which is what reverse-mode differentiation of the forward pass needs.
    """
    return _asm_raw(values, plan, conjugate_transfer=True)


def rs_kernel(x, y, z):
    """Secondary-source wave w(x, y, z) of the Rayleigh-Sommerfeld model."""
    r = np.sqrt(x * x + y * y + z * z)
    return (z / (r * r)) * (1.0 / (2.0 * np.pi * r) + 1.0 / 1j) * np.exp(2j * np.pi * r)


def rs_propagate(field, z):
    """Direct O(N^4) Rayleigh-Sommerfeld summation. Oracle for small grids."""
    if z <= 0:
        raise ValueError("direct summation requires z > 0 (kernel is singular at r=0)")
    grid = field.grid
    x, y = grid.coords()
    dx_out = x[None, :] - x[:, None]          # (out_x, in_x)
    dy_out = y[None, :] - y[:, None]          # (out_y, in_y)
    # w separates as w(xo-xi, yo-yi, z); build the full 4-D kernel lazily.
    w = rs_kernel(dx_out[None, :, None, :], dy_out[:, None, :, None], z)
    out = np.einsum("abij,ij->ab", w, field.values.astype(np.complex128))
    return make_field(grid, out * grid.cell_area)


def bandlimit(values, grid, cutoff=0.5, order=4):
    """Smoothly low-pass a field to spatial frequencies below `cutoff`.

    Both propagators treat the outer spectral band differently (the ASM
    zeroes it, the sampled direct-sum kernel aliases it), so cross-checks
    and conservation statements are made on band-limited fields.
    """
    f_x = np.fft.fftfreq(grid.n_x, d=grid.dx)
    f_y = np.fft.fftfreq(grid.n_y, d=grid.dx)
    f2 = f_y[:, None] ** 2 + f_x[None, :] ** 2
    taper = np.exp(-((f2 / cutoff ** 2) ** order))
    return np.fft.ifft2(np.fft.fft2(values) * taper)


def random_band_limited_field(grid, rng, cutoff=0.5):
    """Random complex field with energy confined to the propagating band."""
    raw = rng.random(grid.shape) * np.exp(2j * np.pi * rng.random(grid.shape))
    return make_field(grid, bandlimit(raw, grid, cutoff=cutoff))


def relative_l2(a, b):
    """|a - b|_2 / |b|_2 on raw complex arrays."""
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def impulse_half_width(z, threshold, grid=None, padding_factor=4):
    """Radius (in wavelengths) enclosing `threshold` of an impulse's power.

    A single-sample impulse at the grid center is propagated by z; the
    returned radius is where the radial cumulative power first reaches the
    threshold. Used to diagnose layer-to-layer connectivity.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must be in (0, 1)")
    if grid is None:
        n = max(64, int(np.ceil(8 * z / 0.53)))
        grid = GridSpec(n, n)
    if z == 0:
        return grid.dx / 2.0
    values = np.zeros(grid.shape, dtype=np.complex128)
    values[grid.n_y // 2, grid.n_x // 2] = 1.0
    out = _asm_raw(values, PropagationPlan(grid, z, padding_factor))
    power = np.abs(out) ** 2
    x, y = grid.coords()
    x0 = x[grid.n_x // 2]
    y0 = y[grid.n_y // 2]
    r = np.sqrt((x[None, :] - x0) ** 2 + (y[:, None] - y0) ** 2)
    order = np.argsort(r, axis=None, kind="stable")
    cum = np.cumsum(power.ravel()[order])
    cum /= cum[-1]
    idx = int(np.searchsorted(cum, threshold))
    return max(float(r.ravel()[order][idx]), grid.dx / 2.0)
