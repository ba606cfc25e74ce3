import numpy as np
import pytest

from d2nn.fields import GridSpec, make_field, total_power
from d2nn.propagation import (PropagationPlan, asm_adjoint, asm_propagate,
                              bandlimit, impulse_half_width,
                              random_band_limited_field, relative_l2,
                              rs_kernel, rs_propagate, _asm_raw)


def gaussian_field(grid, waist):
    x, y = grid.coords()
    r2 = x[None, :] ** 2 + y[:, None] ** 2
    return make_field(grid, np.exp(-r2 / waist ** 2).astype(complex))


class TestPlan:
    def test_rejects_negative_distance(self, grid16):
        with pytest.raises(ValueError):
            PropagationPlan(grid16, -1.0)

    def test_rejects_small_padding(self, grid16):
        with pytest.raises(ValueError):
            PropagationPlan(grid16, 1.0, padding_factor=1)

    def test_padded_shape(self, grid16):
        assert PropagationPlan(grid16, 1.0, padding_factor=4).padded_shape == (64, 64)


class TestAsmBasics:
    def test_zero_distance_is_identity_in_band(self, grid64):
        # identity holds for confined, band-limited fields; the operator
        # always removes evanescent components, even at z = 0
        field = gaussian_field(grid64, waist=3.0)
        out = asm_propagate(field, PropagationPlan(grid64, 0.0))
        assert np.allclose(out.values, field.values, atol=1e-10)

    def test_linearity(self, grid32, rng):
        plan = PropagationPlan(grid32, 5.0)
        u = rng.random(grid32.shape) + 1j * rng.random(grid32.shape)
        v = rng.random(grid32.shape) + 1j * rng.random(grid32.shape)
        a, b = 0.7 - 0.2j, 1.3 + 0.5j
        lhs = _asm_raw(a * u + b * v, plan)
        rhs = a * _asm_raw(u, plan) + b * _asm_raw(v, plan)
        assert np.allclose(lhs, rhs, atol=1e-12)

    def test_plane_wave_phase_advance(self):
        # A uniform field on a large padded grid picks up exp(j 2 pi z)
        # at the center, where edge diffraction has not yet arrived.
        grid = GridSpec(64, 64)
        field = make_field(grid, np.ones(grid.shape, dtype=complex))
        z = 3.0
        out = asm_propagate(field, PropagationPlan(grid, z, padding_factor=4))
        center = out.values[32, 32]
        assert abs(center - np.exp(2j * np.pi * z)) < 1e-2

    def test_batched_matches_loop(self, grid16, rng):
        plan = PropagationPlan(grid16, 2.0)
        batch = rng.random((3,) + grid16.shape) * np.exp(2j * np.pi * rng.random((3,) + grid16.shape))
        out = _asm_raw(batch, plan)
        for i in range(3):
            assert np.allclose(out[i], _asm_raw(batch[i], plan), atol=1e-12)

    def test_complex64_supported(self, grid16, rng):
        plan = PropagationPlan(grid16, 2.0)
        v = (rng.random(grid16.shape) + 1j * rng.random(grid16.shape)).astype(np.complex64)
        out = _asm_raw(v, plan)
        assert out.dtype == np.complex64
        ref = _asm_raw(v.astype(np.complex128), plan)
        assert relative_l2(out, ref) < 1e-5

    def test_rejects_grid_mismatch(self, grid16, grid32):
        field = make_field(grid32, np.ones(grid32.shape, dtype=complex))
        with pytest.raises(ValueError):
            asm_propagate(field, PropagationPlan(grid16, 1.0))


class TestConservation:
    def test_confined_beam_single_hop(self, grid64):
        # Narrow beam: negligible energy reaches the crop boundary, so the
        # window keeps essentially all the power.
        field = gaussian_field(grid64, waist=grid64.n_x * grid64.dx / 10)
        p0 = total_power(field)
        out = asm_propagate(field, PropagationPlan(grid64, 2.0))
        assert abs(total_power(out) - p0) / p0 < 1e-8

    def test_composition_of_hops(self, grid64):
        field = gaussian_field(grid64, waist=grid64.n_x * grid64.dx / 10)
        plan_a = PropagationPlan(grid64, 1.0)
        plan_b = PropagationPlan(grid64, 2.0)
        two = asm_propagate(asm_propagate(field, plan_a), plan_b)
        one = asm_propagate(field, PropagationPlan(grid64, 3.0))
        assert relative_l2(two.values, one.values) < 1e-6


class TestAdjoint:
    def test_inner_product_identity(self, grid32, rng):
        plan = PropagationPlan(grid32, 4.0)
        u = rng.random(grid32.shape) + 1j * rng.random(grid32.shape)
        g = rng.random(grid32.shape) + 1j * rng.random(grid32.shape)
        lhs = np.vdot(g, _asm_raw(u, plan))
        rhs = np.vdot(asm_adjoint(g, plan), u)
        assert abs(lhs - rhs) / abs(lhs) < 1e-12


class TestRayleighSommerfeld:
    def test_kernel_hand_value(self):
        # On-axis, r = z: w = (1/z) (1/(2 pi z) + 1/j) exp(j 2 pi z)
        z = 2.0
        expect = (1.0 / z) * (1.0 / (2 * np.pi * z) - 1j) * np.exp(2j * np.pi * z)
        assert rs_kernel(0.0, 0.0, z) == pytest.approx(expect)

    def test_kernel_inverse_square_far_field(self):
        # |w| ~ 1/r for large on-axis distance
        a = abs(rs_kernel(0.0, 0.0, 100.0))
        b = abs(rs_kernel(0.0, 0.0, 200.0))
        assert a / b == pytest.approx(2.0, rel=1e-3)

    def test_linearity(self, grid16, rng):
        u = rng.random(grid16.shape) + 1j * rng.random(grid16.shape)
        v = rng.random(grid16.shape) + 1j * rng.random(grid16.shape)
        lhs = rs_propagate(make_field(grid16, u + 2.0 * v), 3.0)
        rhs = rs_propagate(make_field(grid16, u), 3.0).values \
            + 2.0 * rs_propagate(make_field(grid16, v), 3.0).values
        assert np.allclose(lhs.values, rhs, atol=1e-10)

    def test_rejects_zero_distance(self, grid16):
        field = make_field(grid16, np.ones(grid16.shape, dtype=complex))
        with pytest.raises(ValueError):
            rs_propagate(field, 0.0)

    def test_matches_asm_band_limited(self, grid16, rng):
        field = random_band_limited_field(grid16, rng, cutoff=0.4)
        for z, padding in ((4.0, 8), (40.0, 32)):
            fast = asm_propagate(field, PropagationPlan(grid16, z, padding))
            exact = rs_propagate(field, z)
            assert relative_l2(fast.values, exact.values) < 0.02


class TestBandlimit:
    def test_removes_high_frequencies(self, grid32, rng):
        v = rng.random(grid32.shape) + 1j * rng.random(grid32.shape)
        out = bandlimit(v, grid32, cutoff=0.3)
        spec = np.fft.fft2(out)
        f = np.fft.fftfreq(grid32.n_x, d=grid32.dx)
        f2 = f[:, None] ** 2 + f[None, :] ** 2
        outer = np.abs(spec[f2 > 0.8 ** 2])
        assert outer.max() < 1e-6 * np.abs(spec).max()


class TestImpulseHalfWidth:
    def test_grows_with_distance(self):
        near = impulse_half_width(1.28, 0.8)
        far = impulse_half_width(12.8, 0.8)
        assert far > near

    def test_zero_distance(self, grid16):
        assert impulse_half_width(0.0, 0.5, grid=grid16) == pytest.approx(grid16.dx / 2)

    def test_rejects_bad_threshold(self):
        with pytest.raises(ValueError):
            impulse_half_width(1.0, 1.5)
