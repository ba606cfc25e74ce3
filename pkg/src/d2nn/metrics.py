"""Evaluation metrics and electronic-network complexity accounting."""

import io
from dataclasses import dataclass

import numpy as np

from . import detection
from .electronic import CONV2F1, FC
from .fields import encode_batch
from .layers import forward_raw

ENERGY_PER_MAC = 1.5e-12

# Reference energy figures for the single-FC back-end as published (J/image).
# The 25x25 entry does not equal macs * 1.5 pJ (9.375e-9); the published
# rounding is kept verbatim so reports can be compared against the table.
_FC_PUBLISHED_ENERGY = {10: 1.5e-9, 25: 9.5e-9, 50: 3.8e-8}


@dataclass
class EvalReport:
    """Per-sample detector records plus aggregate classification metrics.

    mean_efficiency and mean_contrast follow the correctly-classified-sample
    statistics: efficiency is the ratio of the mean correct-detector signal
    to the mean total output power, contrast the mean per-sample margin
    (I_L - I_SC) / E. Both are None when nothing was classified correctly.
    """

    accuracy: float
    confusion: np.ndarray
    mean_efficiency: float
    mean_contrast: float
    labels: np.ndarray
    predictions: np.ndarray
    signals: np.ndarray        # (N, D)
    total_power: np.ndarray    # (N,)

    def to_csv(self):
        buf = io.StringIO()
        d = self.signals.shape[1]
        cols = ["index", "label", "prediction"] + [f"I_{l}" for l in range(d)] + ["E"]
        buf.write(",".join(cols) + "\n")
        for i in range(len(self.labels)):
            row = [str(i), str(int(self.labels[i])), str(int(self.predictions[i]))]
            row += [repr(float(v)) for v in self.signals[i]]
            row.append(repr(float(self.total_power[i])))
            buf.write(",".join(row) + "\n")
        buf.write("# summary\n")
        buf.write(f"accuracy,{repr(self.accuracy)}\n")
        buf.write(f"mean_efficiency,{'' if self.mean_efficiency is None else repr(self.mean_efficiency)}\n")
        buf.write(f"mean_contrast,{'' if self.mean_contrast is None else repr(self.mean_contrast)}\n")
        buf.write("confusion," + ";".join(",".join(str(int(c)) for c in row)
                                          for row in self.confusion) + "\n")
        return buf.getvalue()


def confusion_matrix(labels, predictions, n_classes):
    """Counts with rows = truth, columns = prediction."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(labels), np.asarray(predictions)), 1)
    return cm


def evaluate_model(model, images, labels, det_ctx, encoding,
                   dtype=np.complex64, batch_size=256):
    """Full evaluation of an all-optical classifier on a test split."""
    labels = np.asarray(labels)
    n = len(images)
    d = det_ctx.layout.n_classes
    signals = np.zeros((n, d))
    total = np.zeros(n)
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        values = encode_batch(images[start:stop], encoding, model.grid, dtype=dtype)
        out, _ = forward_raw(values, model)
        intensity = np.abs(out) ** 2
        signals[start:stop] = detection.detector_signals(
            intensity, det_ctx.layout, det_ctx.grid, det_ctx.masks)
        total[start:stop] = intensity.sum(axis=(-2, -1)) * model.grid.cell_area
    predictions = detection.classify(signals)
    correct = predictions == labels
    accuracy = float(np.mean(correct))
    cm = confusion_matrix(labels, predictions, d)
    if correct.any():
        i_l = signals[np.arange(n), labels][correct]
        comp = signals.copy()
        comp[np.arange(n), labels] = -np.inf
        i_sc = comp.max(axis=1)[correct]
        e = total[correct]
        efficiency = float(i_l.mean() / e.mean())
        contrast = float(np.mean((i_l - i_sc) / e))
    else:
        efficiency = None
        contrast = None
    return EvalReport(accuracy, cm, efficiency, contrast,
                      labels, predictions, signals, total)


def power_efficiency(model, images, labels, det_ctx, encoding, **kw):
    report = evaluate_model(model, images, labels, det_ctx, encoding, **kw)
    return report.mean_efficiency


def signal_contrast(model, images, labels, det_ctx, encoding, **kw):
    report = evaluate_model(model, images, labels, det_ctx, encoding, **kw)
    return report.mean_contrast


def complexity_report(kind, sensor_pixels, n_classes=10):
    """MAC/FLOP/energy accounting for the supported electronic back-ends.

    FC counts match the published reference rows exactly. The 2C2F-1 counts
    are first-principles values under valid padding (biases listed
    separately); they are reported, not asserted against external tables.
    """
    p = sensor_pixels
    if kind == FC:
        macs = p * p * n_classes
        report = {
            "macs": macs,
            "params_weights_only": p * p * n_classes,
            "params_with_biases": p * p * n_classes + n_classes,
            "flops": 2 * macs,
            "energy_joules_per_image": macs * ENERGY_PER_MAC,
        }
        if p in _FC_PUBLISHED_ENERGY:
            report["energy_joules_published"] = _FC_PUBLISHED_ENERGY[p]
    elif kind == CONV2F1:
        stride = 1 if p == 10 else 2
        o1 = (p - 6) // stride + 1
        o2 = (o1 - 3) // stride + 1
        flat = o2 * o2
        macs = o1 * o1 * 36 + o2 * o2 * 9 + flat * 30 + 30 * n_classes
        weights = 36 + 9 + flat * 30 + 30 * n_classes
        report = {
            "macs": macs,
            "params_weights_only": weights,
            "params_with_biases": weights + 1 + 1 + 30 + n_classes,
            "flops": 2 * macs,
            "energy_joules_per_image": macs * ENERGY_PER_MAC,
        }
    else:
        raise ValueError(f"unsupported electronic architecture {kind!r}")
    return report
