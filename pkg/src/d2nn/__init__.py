"""Differentiable diffractive optical neural network simulator and trainer."""

from .fields import AMPLITUDE, PHASE, ComplexField, GridSpec, encode_input, total_power
from .propagation import PropagationPlan, asm_propagate, impulse_half_width, rs_propagate
from .layers import (COMPLEX, PHASE_ONLY, RELU_NORM, SIGMOID, D2NNModel,
                     LayerParams, build_model, layer_transmission, model_forward)
from .detection import (MSE, SCE, DetectorLayout, classify, default_layout,
                        detector_signals, mse_loss, normalize_detectors,
                        sce_loss, target_map)
from .training import AdamState, DetectorContext, OpticalTask, train_task
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint

__all__ = [
    "AMPLITUDE", "PHASE", "ComplexField", "GridSpec", "encode_input", "total_power",
    "PropagationPlan", "asm_propagate", "impulse_half_width", "rs_propagate",
    "COMPLEX", "PHASE_ONLY", "RELU_NORM", "SIGMOID", "D2NNModel", "LayerParams",
    "build_model", "layer_transmission", "model_forward",
    "MSE", "SCE", "DetectorLayout", "classify", "default_layout",
    "detector_signals", "mse_loss", "normalize_detectors", "sce_loss", "target_map",
    "AdamState", "DetectorContext", "OpticalTask", "train_task",
    "Checkpoint", "load_checkpoint", "save_checkpoint",
]
