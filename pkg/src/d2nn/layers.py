"""Trainable diffractive layers and the multi-layer optical forward pass.

Each layer neuron applies a complex transmission t = a * exp(j phi). The
physical amplitude/phase pair is derived from two latent arrays (alpha,
beta) through one of two parameterizations:

  sigmoid:   a = sigmoid(alpha),                  phi = 2 pi sigmoid(beta)
  relu_norm: a = relu(alpha) / max(relu(alpha)),  phi = 2 pi beta

In phase_only mode the amplitude is pinned to 1 and alpha is inert.
"""

import copy
from dataclasses import dataclass, field as dc_field

import numpy as np

from .fields import ComplexField, GridSpec
from .propagation import PropagationPlan, _asm_raw

PHASE_ONLY = "phase_only"
COMPLEX = "complex"
SIGMOID = "sigmoid"
RELU_NORM = "relu_norm"

_RELU_NORM_EPS = 1e-12


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@dataclass
class LayerParams:
    """Latent arrays and modulation configuration of one diffractive layer."""

    alpha: np.ndarray
    beta: np.ndarray
    modulation_mode: str = PHASE_ONLY
    parameterization: str = RELU_NORM

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if self.alpha.shape != self.beta.shape:
            raise ValueError("alpha and beta must have the same shape")
        if not (np.all(np.isfinite(self.alpha)) and np.all(np.isfinite(self.beta))):
            raise ValueError("latent arrays must be finite")
        if self.modulation_mode not in (PHASE_ONLY, COMPLEX):
            raise ValueError(f"unknown modulation mode {self.modulation_mode!r}")
        if self.parameterization not in (SIGMOID, RELU_NORM):
            raise ValueError(f"unknown parameterization {self.parameterization!r}")


def modulation_sigmoid(layer):
    """Amplitude in (0,1) and phase in (0, 2 pi) from the sigmoid latents."""
    return sigmoid(layer.alpha), 2.0 * np.pi * sigmoid(layer.beta)


def modulation_relu_norm(layer):
    """ReLU amplitude normalized by its per-layer maximum; unbounded phase."""
    relu = np.maximum(layer.alpha, 0.0)
    denom = max(float(relu.max()), _RELU_NORM_EPS)
    return relu / denom, 2.0 * np.pi * layer.beta


def layer_modulation(layer):
    if layer.parameterization == SIGMOID:
        a, phi = modulation_sigmoid(layer)
    else:
        a, phi = modulation_relu_norm(layer)
    if layer.modulation_mode == PHASE_ONLY:
        a = np.ones_like(a)
    return a, phi


def layer_transmission(layer):
    """Complex per-neuron transmission t = a * exp(j phi)."""
    a, phi = layer_modulation(layer)
    return a * np.exp(1j * phi)


def init_layer(grid, modulation_mode, parameterization):
    """Initialize to a = 1, phi = pi (sigmoid amplitude saturates at ~0.982)."""
    shape = grid.shape
    if parameterization == SIGMOID:
        alpha = np.full(shape, 4.0)
        beta = np.zeros(shape)
    else:
        alpha = np.ones(shape)
        beta = np.full(shape, 0.5)
    return LayerParams(alpha, beta, modulation_mode, parameterization)


@dataclass
class D2NNModel:
    """Stack of diffractive layers with fixed geometry (all lengths in lambda)."""

    layers: list
    grid: GridSpec
    z_in: float
    delta_z: float
    z_out: float
    padding_factor: int = 2

    def __post_init__(self):
        if not self.layers:
            raise ValueError("model needs at least one layer")
        if self.delta_z <= 0:
            raise ValueError("inter-layer distance must be positive")
        for layer in self.layers:
            if layer.alpha.shape != self.grid.shape:
                raise ValueError("all layers must share the model grid")

    @property
    def modulation_mode(self):
        return self.layers[0].modulation_mode

    @property
    def parameterization(self):
        return self.layers[0].parameterization

    def hop_distances(self):
        """Propagation distances: input->L1, between layers, last->output."""
        return [self.z_in] + [self.delta_z] * (len(self.layers) - 1) + [self.z_out]

    def clone(self):
        return copy.deepcopy(self)


def build_model(grid, n_layers, delta_z, modulation_mode, parameterization,
                z_in=None, z_out=None, padding_factor=2):
    """Model with the default symmetric geometry z_in = z_out = delta_z."""
    layers = [init_layer(grid, modulation_mode, parameterization)
              for _ in range(n_layers)]
    return D2NNModel(layers, grid,
                     delta_z if z_in is None else z_in,
                     delta_z,
                     delta_z if z_out is None else z_out,
                     padding_factor)


def _plans(model):
    return [PropagationPlan(model.grid, z, model.padding_factor)
            for z in model.hop_distances()]


def forward_raw(values, model, keep_cache=False):
    """Optical forward pass on raw (batched) complex arrays.

    Returns (output values, cache). The cache holds the field incident on
    each layer plus each layer transmission, which is exactly what the
    reverse pass in the training module consumes.
    """
    plans = _plans(model)
    transmissions = [layer_transmission(layer) for layer in model.layers]
    u = _asm_raw(values, plans[0])
    incident = []
    for t, plan in zip(transmissions, plans[1:]):
        if keep_cache:
            incident.append(u)
        u = _asm_raw(u * t.astype(u.dtype), plan)
    cache = {"incident": incident, "transmissions": transmissions,
             "plans": plans} if keep_cache else None
    return u, cache


def model_forward(input_field, model):
    """Propagate an input field through the model.

    Returns the complex output field and the output-plane intensity |u|^2.
    """
    if input_field.grid != model.grid:
        raise ValueError("input grid does not match model grid")
    out, _ = forward_raw(input_field.values, model)
    field = ComplexField(model.grid, out)
    return field, np.abs(out) ** 2


def trainable_keys(model):
    """(layer index, latent name) pairs that the optimizer may update."""
    keys = []
    for idx, layer in enumerate(model.layers):
        if layer.modulation_mode == COMPLEX:
            keys.append((idx, "alpha"))
        keys.append((idx, "beta"))
    return keys


def get_param(model, key):
    idx, name = key
    return getattr(model.layers[idx], name)


def set_param(model, key, value):
    idx, name = key
    setattr(model.layers[idx], name, np.asarray(value, dtype=np.float64))
