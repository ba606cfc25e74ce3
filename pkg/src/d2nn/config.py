"""Run configuration: JSON schema, validation and hashing."""

import hashlib
import json
from dataclasses import asdict, dataclass, field

from .detection import MSE, SCE
from .electronic import CONV2F1, FC
from .fields import AMPLITUDE, DEFAULT_DX, PHASE
from .layers import COMPLEX, PHASE_ONLY, RELU_NORM, SIGMOID

ALL_OPTICAL = "all_optical"
STAGE1 = "stage1"
STAGE2 = "stage2"
DIRECT = "direct"
PERFECT_IMAGER = "perfect_imager"
HYBRID_MODES = (ALL_OPTICAL, STAGE1, STAGE2, DIRECT, PERFECT_IMAGER)

REFERENCE_NEURONS = 200


def equivalent_spacing(delta_z_ref, grid_n):
    """Desk-scale layer spacing with the same connectivity geometry.

    The diffraction cone angle needed to span the aperture is preserved by
    scaling the reference spacing with the grid side.
    """
    return delta_z_ref * grid_n / REFERENCE_NEURONS


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    encoding: str = AMPLITUDE
    grid_n: int = 64
    dx: float = DEFAULT_DX
    n_layers: int = 5
    delta_z: float = 12.8
    z_in: float = None
    z_out: float = None
    padding_factor: int = 2
    modulation_mode: str = PHASE_ONLY
    parameterization: str = RELU_NORM
    loss: str = SCE
    epochs: int = 10
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0
    deterministic: bool = True
    detector_layout: dict = None      # {"centers": [[x,y],...], "side": s} or None
    sensor_p: int = None
    electronic: str = None            # "fc" | "2c2f1"
    hybrid_mode: str = ALL_OPTICAL
    n_train: int = None               # desk-scale stratified subset sizes
    n_val: int = None
    n_test: int = None
    out_dir: str = "runs"

    def validate(self):
        if self.encoding not in (AMPLITUDE, PHASE):
            raise ConfigError(f"encoding must be amplitude or phase, got {self.encoding!r}")
        if self.grid_n < 28:
            raise ConfigError("grid_n must be at least 28")
        if self.dx <= 0:
            raise ConfigError("dx must be positive")
        if self.n_layers < 1:
            raise ConfigError("n_layers must be >= 1")
        if self.delta_z <= 0:
            raise ConfigError("delta_z must be positive")
        if self.modulation_mode not in (PHASE_ONLY, COMPLEX):
            raise ConfigError(f"bad modulation_mode {self.modulation_mode!r}")
        if self.parameterization not in (SIGMOID, RELU_NORM):
            raise ConfigError(f"bad parameterization {self.parameterization!r}")
        if self.loss not in (MSE, SCE):
            raise ConfigError(f"bad loss {self.loss!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.hybrid_mode not in HYBRID_MODES:
            raise ConfigError(f"bad hybrid_mode {self.hybrid_mode!r}")
        if self.hybrid_mode != ALL_OPTICAL and self.sensor_p is None:
            raise ConfigError(f"hybrid mode {self.hybrid_mode!r} requires sensor_p")
        if self.sensor_p is not None and self.sensor_p < 1:
            raise ConfigError("sensor_p must be positive")
        if self.hybrid_mode in (STAGE2, DIRECT, PERFECT_IMAGER) and self.electronic is None:
            raise ConfigError(f"hybrid mode {self.hybrid_mode!r} requires an electronic net")
        if self.electronic is not None and self.electronic not in (FC, CONV2F1):
            raise ConfigError(f"bad electronic net kind {self.electronic!r}")
        return self

    def to_dict(self):
        return asdict(self)

    def canonical_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self):
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()[:16]


def config_from_dict(data):
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**data).validate()


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return config_from_dict(data)
