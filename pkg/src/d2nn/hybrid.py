"""Sensor-array interface and the two-stage hybrid training procedure.

The sensor is an intensity-only average-pooling readout over the central
region of the output plane. Stage 1 pre-trains the optical front-end behind
the sensor with a temporary virtual diffractive layer; stage 2 replaces the
virtual layer with a freshly initialized electronic network and trains both
parts jointly with equal learning rates. A single-stage joint mode and a
no-optics "perfect imager" baseline are also provided.
"""

from dataclasses import dataclass

import numpy as np

from . import detection
from .detection import SCE
from .electronic import make_net, softmax_ce_loss_grad
from .fields import GridSpec, encode_batch
from .layers import (D2NNModel, forward_raw, get_param, init_layer,
                     set_param, trainable_keys)
from .propagation import PropagationPlan, _asm_raw, asm_adjoint
from .training import backward_from_output, output_adjoint

_SQRT_EPS = 1e-12

# Sensor pixels cover the central ~53.3 lambda region at the 200-neuron
# reference scale; the covered sample count scales with the grid and is
# floored to a multiple of p so pixels are whole sample blocks.
_REGION_SIDE_REF = 53.3
_REFERENCE_N = 200


@dataclass(frozen=True)
class SensorSpec:
    """p x p intensity pixels over a centered square of grid samples."""

    p: int
    covered_samples: int

    def __post_init__(self):
        if self.covered_samples % self.p != 0:
            raise ValueError("covered region must divide into p x p whole-sample pixels")

    @property
    def block(self):
        return self.covered_samples // self.p


def default_sensor(grid, p):
    nominal = _REGION_SIDE_REF * (min(grid.n_x, grid.n_y) / _REFERENCE_N) / grid.dx
    m = int(nominal // p) * p
    if m < p:
        raise ValueError(f"grid too small for a {p}x{p} sensor")
    return SensorSpec(p, m)


def _crop_slices(grid, m):
    oy = (grid.n_y - m) // 2
    ox = (grid.n_x - m) // 2
    return slice(oy, oy + m), slice(ox, ox + m)


def sensor_readout(intensity, sensor, grid):
    """Average-pool the covered region into p x p pixels (batched)."""
    m, p, k = sensor.covered_samples, sensor.p, sensor.block
    sy, sx = _crop_slices(grid, m)
    region = intensity[..., sy, sx]
    shape = region.shape[:-2] + (p, k, p, k)
    return region.reshape(shape).mean(axis=(-3, -1))

def sensor_adjoint(d_pixels, sensor, grid, batch_shape):
    """dL/dS on the full grid from dL/dI_A (pooling spreads 1/k^2)."""
    m, p, k = sensor.covered_samples, sensor.p, sensor.block
    sy, sx = _crop_slices(grid, m)
    dS = np.zeros(batch_shape + grid.shape)
    spread = np.repeat(np.repeat(d_pixels, k, axis=-2), k, axis=-1) / (k * k)
    dS[..., sy, sx] = spread
    return dS


def virtual_relaunch(pixels, sensor, grid, dtype=np.complex128):
    """Re-emit the sensor reading as a zero-phase field, amplitude sqrt(I'_A).

    The pixel map is nearest-neighbour upsampled back onto the covered
    region (its exact pooling pre-image); the rest of the plane is dark.
    """
    pixels = np.asarray(pixels)
    if np.any(pixels < 0):
        raise ValueError("sensor intensities must be nonnegative")
    k = sensor.block
    up = np.repeat(np.repeat(pixels, k, axis=-2), k, axis=-1)
    sy, sx = _crop_slices(grid, sensor.covered_samples)
    out = np.zeros(pixels.shape[:-2] + grid.shape, dtype=dtype)
    out[..., sy, sx] = np.sqrt(up)
    return out


def _relaunch_backward(g_field, pixels, sensor, grid):
    """dL/dI_A from the adjoint at the relaunched field (clamped sqrt)."""
    k = sensor.block
    sy, sx = _crop_slices(grid, sensor.covered_samples)
    up = np.repeat(np.repeat(pixels, k, axis=-2), k, axis=-1)
    dv = 2.0 * np.real(g_field[..., sy, sx])        # field is real-valued
    dup = dv * 0.5 / np.sqrt(up + _SQRT_EPS)
    shape = dup.shape[:-2] + (sensor.p, k, sensor.p, k)
    return dup.reshape(shape).sum(axis=(-3, -1))


class Stage1Task:
    """Optical front-end + sensor + virtual diffractive classifier (SCE)."""

    def __init__(self, model, sensor, det_ctx, encoding, dtype=np.complex64,
                 virtual_layer=None):
        self.model = model
        self.sensor = sensor
        self.det_ctx = det_ctx
        self.encoding = encoding
        self.dtype = dtype
        vl = virtual_layer or init_layer(model.grid, model.modulation_mode,
                                         model.parameterization)
        # z_in = 0: the relaunched field feeds the virtual layer directly.
        self.virtual_model = D2NNModel([vl], model.grid, 0.0, model.delta_z,
                                       model.delta_z, model.padding_factor)

    def _forward(self, images, keep_cache):
        values = encode_batch(images, self.encoding, self.model.grid, dtype=self.dtype)
        out, cache = forward_raw(values, self.model, keep_cache=keep_cache)
        intensity = np.abs(out) ** 2
        pixels = sensor_readout(intensity, self.sensor, self.model.grid)
        v = virtual_relaunch(pixels, self.sensor, self.model.grid, dtype=self.dtype)
        out2, vcache = forward_raw(v, self.virtual_model, keep_cache=keep_cache)
        return out, cache, pixels, out2, vcache

    def loss_and_grads(self, images, labels):
        out, cache, pixels, out2, vcache = self._forward(images, keep_cache=True)
        ctx = self.det_ctx
        signals = detection.detector_signals(np.abs(out2) ** 2, ctx.layout,
                                             ctx.grid, ctx.masks)
        loss, dL_dS2 = detection.sce_loss_grad(signals, labels, ctx.layout,
                                               ctx.grid, ctx.masks)
        g2 = output_adjoint(out2, dL_dS2)
        vgrads, g_v = backward_from_output(self.virtual_model, vcache, g2,
                                           to_input=True)
        d_pixels = _relaunch_backward(g_v, pixels, self.sensor, self.model.grid)
        dL_dS = sensor_adjoint(d_pixels, self.sensor, self.model.grid,
                               images.shape[:1])
        g_out = output_adjoint(out, dL_dS)
        ograds, _ = backward_from_output(self.model, cache, g_out)
        okeys = set(trainable_keys(self.model))
        grads = {k: v for k, v in ograds.items() if k in okeys}
        vkeys = set(trainable_keys(self.virtual_model))
        grads.update({("virtual",) + k[1:]: v for k, v in vgrads.items() if k in vkeys})
        return loss, grads

    def predict(self, images):
        _, _, _, out2, _ = self._forward(images, keep_cache=False)
        ctx = self.det_ctx
        signals = detection.detector_signals(np.abs(out2) ** 2, ctx.layout,
                                             ctx.grid, ctx.masks)
        return detection.classify(signals)

    def params(self):
        d = {k: get_param(self.model, k) for k in trainable_keys(self.model)}
        for k in trainable_keys(self.virtual_model):
            d[("virtual",) + k[1:]] = get_param(self.virtual_model, k)
        return d

    def set_params(self, params):
        for k, v in params.items():
            if k[0] == "virtual":
                set_param(self.virtual_model, (0, k[1]), v)
            else:
                set_param(self.model, k, v)

    def snapshot(self):
        return {k: v.copy() for k, v in self.params().items()}

    def restore(self, snap):
        self.set_params({k: v.copy() for k, v in snap.items()})


class HybridTask:
    """Optical front-end + sensor + batch-norm + electronic net, joint SCE."""

    def __init__(self, model, sensor, net, encoding, dtype=np.complex64,
                 train_optical=True):
        self.model = model
        self.sensor = sensor
        self.net = net
        self.encoding = encoding
        self.dtype = dtype
        self.train_optical = train_optical

    def _optical_forward(self, images, keep_cache):
        values = encode_batch(images, self.encoding, self.model.grid, dtype=self.dtype)
        out, cache = forward_raw(values, self.model, keep_cache=keep_cache)
        pixels = sensor_readout(np.abs(out) ** 2, self.sensor, self.model.grid)
        return out, cache, pixels

    def loss_and_grads(self, images, labels):
        out, cache, pixels, = self._optical_forward(images, keep_cache=self.train_optical)
        logits = self.net.forward(pixels, training=True)
        loss, dlogits = softmax_ce_loss_grad(logits, labels)
        egrads, d_pixels = self.net.backward(dlogits)
        grads = {("net", k): v for k, v in egrads.items()}
        if self.train_optical:
            dL_dS = sensor_adjoint(d_pixels, self.sensor, self.model.grid,
                                   images.shape[:1])
            g_out = output_adjoint(out, dL_dS)
            ograds, _ = backward_from_output(self.model, cache, g_out)
            okeys = set(trainable_keys(self.model))
            grads.update({k: v for k, v in ograds.items() if k in okeys})
        return loss, grads

    def predict(self, images):
        _, _, pixels = self._optical_forward(images, keep_cache=False)
        logits = self.net.forward(pixels, training=False)
        return np.argmax(logits, axis=-1)

    def params(self):
        d = {("net", k): v for k, v in self.net.params().items()}
        if self.train_optical:
            d.update({k: get_param(self.model, k) for k in trainable_keys(self.model)})
        return d

    def set_params(self, params):
        net_params = {k[1]: v for k, v in params.items() if k[0] == "net"}
        self.net.set_params(net_params)
        for k, v in params.items():
            if k[0] != "net":
                set_param(self.model, k, v)

    def snapshot(self):
        snap = {("net", k): v.copy() for k, v in self.net.state_arrays().items()}
        for k in trainable_keys(self.model):
            snap[k] = get_param(self.model, k).copy()
        return snap

    def restore(self, snap):
        self.net.load_state({k[1]: v for k, v in snap.items() if k[0] == "net"})
        for k, v in snap.items():
            if k[0] != "net":
                set_param(self.model, k, v.copy())


class PerfectImagerTask:
    """No-optics baseline: the sensor reads the input object directly."""

    def __init__(self, sensor_pixels, net):
        self.p = sensor_pixels
        self.net = net

    def pool_images(self, images):
        """Area-average the object intensity |p|^2 down to p x p pixels."""
        b, h, w = images.shape
        p = self.p
        up = int(np.lcm(h, p) // h)
        big = np.repeat(np.repeat(images.astype(np.float64) ** 2, up, axis=1),
                        up, axis=2)
        k = big.shape[1] // p
        return big.reshape(b, p, k, p, k).mean(axis=(2, 4))

    def loss_and_grads(self, images, labels):
        pixels = self.pool_images(images)
        logits = self.net.forward(pixels, training=True)
        loss, dlogits = softmax_ce_loss_grad(logits, labels)
        egrads, _ = self.net.backward(dlogits)
        return loss, {("net", k): v for k, v in egrads.items()}

    def predict(self, images):
        logits = self.net.forward(self.pool_images(images), training=False)
        return np.argmax(logits, axis=-1)

    def params(self):
        return {("net", k): v for k, v in self.net.params().items()}

    def set_params(self, params):
        self.net.set_params({k[1]: v for k, v in params.items()})

    def snapshot(self):
        return {("net", k): v.copy() for k, v in self.net.state_arrays().items()}

    def restore(self, snap):
        self.net.load_state({k[1]: v for k, v in snap.items()})
