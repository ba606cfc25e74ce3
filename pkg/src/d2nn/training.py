"""Reverse-mode gradients through the optical chain, Adam, and the train loop.

The adjoint convention used throughout: for a real loss L of a complex field
u, the carried adjoint g satisfies dL = 2 Re <g, du>. The adjoint of an
angular-spectrum hop is the same hop with conjugated transfer function; the
adjoint of elementwise modulation multiplies by the conjugate transmission
and routes into the latent-variable derivatives of the active
parameterization.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import detection
from .detection import MSE, SCE
from .fields import encode_batch
from .layers import (COMPLEX, PHASE_ONLY, RELU_NORM, SIGMOID, _RELU_NORM_EPS,
                     forward_raw, get_param, layer_modulation, set_param,
                     sigmoid, trainable_keys)
from .propagation import asm_adjoint


@dataclass
class DetectorContext:
    """Layout bound to a grid, with precomputed per-class masks."""

    layout: object
    grid: object
    masks: np.ndarray = None

    def __post_init__(self):
        if self.masks is None:
            self.masks = detection.detector_masks(self.layout, self.grid)


def output_adjoint(out_values, dL_dS):
    """Adjoint field at the output plane from dL/d|u|^2."""
    return dL_dS.astype(out_values.real.dtype) * out_values


def backward_from_output(model, cache, g_out, to_input=False):
    """Walk the adjoint back through the layer stack.

    Returns (grads keyed by (layer, latent), adjoint field). The adjoint is
    taken at the first layer's entry, or at the input plane itself when
    `to_input` is set (one extra adjoint hop). Latent gradients are summed
    over all batch axes.
    """
    plans = cache["plans"]
    incident = cache["incident"]
    transmissions = cache["transmissions"]
    grads = {}
    g = g_out
    batch_axes = tuple(range(g.ndim - 2))
    for l in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[l]
        g_v = asm_adjoint(g, plans[l + 1])
        u_in = incident[l]
        t = transmissions[l]
        a, phi = layer_modulation(layer)
        sens = np.conj(g_v) * u_in            # dL = 2 Re(sens * dt)
        if batch_axes:
            sens = sens.sum(axis=batch_axes)
        dphi = 2.0 * np.real(sens * 1j * t)
        if layer.modulation_mode == COMPLEX:
            da = 2.0 * np.real(sens * np.exp(1j * phi))
            if layer.parameterization == SIGMOID:
                sa = sigmoid(layer.alpha)
                grads[(l, "alpha")] = da * sa * (1.0 - sa)
            else:
                relu = np.maximum(layer.alpha, 0.0)
                m = float(relu.max())
                if m <= 0.0:
                    grads[(l, "alpha")] = np.zeros_like(layer.alpha)
                else:
                    active = (layer.alpha > 0.0).astype(np.float64)
                    dalpha = da * active / m
                    kstar = np.unravel_index(int(np.argmax(relu)), relu.shape)
                    dalpha[kstar] -= (da * relu).sum() / (m * m)
                    grads[(l, "alpha")] = dalpha
        if layer.parameterization == SIGMOID:
            sb = sigmoid(layer.beta)
            grads[(l, "beta")] = dphi * 2.0 * np.pi * sb * (1.0 - sb)
        else:
            grads[(l, "beta")] = dphi * 2.0 * np.pi
        g = np.conj(t).astype(g_v.dtype) * g_v
    if to_input:
        g = asm_adjoint(g, plans[0])
    return grads, g


def optical_loss_and_grads(model, input_values, labels, loss_kind, det_ctx):
    """Mean batch loss and gradients for every trainable latent array."""
    out, cache = forward_raw(input_values, model, keep_cache=True)
    intensity = np.abs(out) ** 2
    if loss_kind == SCE:
        signals = detection.detector_signals(intensity, det_ctx.layout,
                                             det_ctx.grid, det_ctx.masks)
        loss, dL_dS = detection.sce_loss_grad(signals, labels, det_ctx.layout,
                                              det_ctx.grid, det_ctx.masks)
    elif loss_kind == MSE:
        loss, dL_dS = detection.mse_loss_grad(intensity, labels, det_ctx.layout,
                                              det_ctx.grid, det_ctx.masks)
    else:
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    g_out = output_adjoint(out, dL_dS)
    grads, _ = backward_from_output(model, cache, g_out)
    keys = set(trainable_keys(model))
    grads = {k: v for k, v in grads.items() if k in keys}
    for k, v in grads.items():
        if not np.all(np.isfinite(v)):
            raise FloatingPointError(f"non-finite gradient at layer {k[0]} ({k[1]})")
    return loss, grads


@dataclass
class AdamState:
    """Standard Adam with bias correction; one slot pair per parameter key."""

    lr: float = 1e-3
    b1: float = 0.9
    b2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = dc_field(default_factory=dict)
    v: dict = dc_field(default_factory=dict)

    def step(self, params, grads):
        """Update params (dict of arrays) in place from matching grads."""
        self.step_count += 1
        t = self.step_count
        for key, g in grads.items():
            if key not in self.m:
                self.m[key] = np.zeros_like(g)
                self.v[key] = np.zeros_like(g)
            self.m[key] = self.b1 * self.m[key] + (1 - self.b1) * g
            self.v[key] = self.b2 * self.v[key] + (1 - self.b2) * g * g
            mhat = self.m[key] / (1 - self.b1 ** t)
            vhat = self.v[key] / (1 - self.b2 ** t)
            params[key] = params[key] - self.lr * mhat / (np.sqrt(vhat) + self.eps)
        return params


def grad_check(loss_fn, params, grads, rng, n_probes=20, h=1e-5):
    """Max relative error of supplied grads vs central finite differences.

    loss_fn() re-evaluates the loss from the current parameter arrays (the
    arrays in `params` are mutated in place for the probes).
    """
    keys = sorted(params.keys(), key=str)
    flat = [(k, idx) for k in keys for idx in range(params[k].size)]
    probes = rng.choice(len(flat), size=min(n_probes, len(flat)), replace=False)
    worst = 0.0
    for p in probes:
        key, idx = flat[p]
        arr = params[key].ravel()
        orig = arr[idx]
        arr[idx] = orig + h
        lp = loss_fn()
        arr[idx] = orig - h
        lm = loss_fn()
        arr[idx] = orig
        fd = (lp - lm) / (2 * h)
        an = grads[key].ravel()[idx]
        denom = max(abs(fd), abs(an), 1e-8)
        worst = max(worst, abs(fd - an) / denom)
    return worst


def model_grad_check(model, det_ctx, loss_kind, rng, batch=2, n_probes=20, h=1e-5):
    """Finite-difference check of the full optical adjoint on random inputs."""
    grid = model.grid
    inputs = (rng.random((batch,) + grid.shape)
              * np.exp(2j * np.pi * rng.random((batch,) + grid.shape)))
    labels = rng.integers(0, det_ctx.layout.n_classes, size=batch)
    loss, grads = optical_loss_and_grads(model, inputs, labels, loss_kind, det_ctx)
    params = {k: get_param(model, k) for k in trainable_keys(model)}

    def loss_fn():
        l, _ = optical_loss_and_grads(model, inputs, labels, loss_kind, det_ctx)
        return l

    return grad_check(loss_fn, params, grads, rng, n_probes=n_probes, h=h)


# ---------------------------------------------------------------------------
# Generic training loop (shared by all-optical and hybrid tasks)

@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_accuracy: float


def iterate_batches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def evaluate_accuracy(task, images, labels, batch_size=256):
    correct = 0
    for start in range(0, len(images), batch_size):
        pred = task.predict(images[start:start + batch_size])
        correct += int(np.sum(pred == labels[start:start + batch_size]))
    return correct / len(images)


def train_task(task, data, epochs, batch_size, lr, seed):
    """Epoch loop with per-epoch validation and best-checkpoint selection.

    `task` provides loss_and_grads / predict / params / set_params;
    `data` is a dict with train/val image and label arrays. Returns
    (best parameter snapshot, best val accuracy, best epoch, curve).
    """
    train_images, train_labels = data["train_images"], data["train_labels"]
    val_images, val_labels = data["val_images"], data["val_labels"]
    if len(train_images) == 0 or len(val_images) == 0:
        raise ValueError("empty training or validation split")
    rng = np.random.default_rng(seed)
    adam = AdamState(lr=lr)
    curve = []
    best = None
    for epoch in range(1, epochs + 1):
        losses = []
        for batch_idx in iterate_batches(len(train_images), batch_size, rng):
            loss, grads = task.loss_and_grads(train_images[batch_idx],
                                              train_labels[batch_idx])
            losses.append(loss)
            params = task.params()
            adam.step(params, grads)
            task.set_params(params)
        val_acc = evaluate_accuracy(task, val_images, val_labels)
        curve.append(EpochRecord(epoch, float(np.mean(losses)), val_acc))
        if best is None or val_acc > best[1]:
            best = (task.snapshot(), val_acc, epoch)
    return best[0], best[1], best[2], curve


class OpticalTask:
    """All-optical classifier: D2NN forward, detector argmax prediction."""

    def __init__(self, model, det_ctx, loss_kind, encoding, dtype=np.complex64):
        self.model = model
        self.det_ctx = det_ctx
        self.loss_kind = loss_kind
        self.encoding = encoding
        self.dtype = dtype

    def encode(self, images):
        return encode_batch(images, self.encoding, self.model.grid, dtype=self.dtype)

    def loss_and_grads(self, images, labels):
        return optical_loss_and_grads(self.model, self.encode(images), labels,
                                      self.loss_kind, self.det_ctx)

    def predict(self, images):
        out, _ = forward_raw(self.encode(images), self.model)
        signals = detection.detector_signals(np.abs(out) ** 2, self.det_ctx.layout,
                                             self.det_ctx.grid, self.det_ctx.masks)
        return detection.classify(signals)

    def params(self):
        return {k: get_param(self.model, k) for k in trainable_keys(self.model)}

    def set_params(self, params):
        for k, v in params.items():
            set_param(self.model, k, v)

    def snapshot(self):
        return {k: v.copy() for k, v in self.params().items()}

    def restore(self, snapshot):
        self.set_params({k: v.copy() for k, v in snapshot.items()})
