"""Output-plane class detectors and the two training losses.

Ten square detectors sit on the output plane in a 3-4-3 arrangement inside
the central region; the class prediction of an all-optical run is the argmax
of the per-detector integrated intensities. Training minimizes either a
full-plane MSE against a target intensity map or softmax-cross-entropy on
normalized detector signals.
"""

from dataclasses import dataclass

import numpy as np

# Reference geometry: 200-neuron layers at 0.53 lambda pitch (side 106 lambda)
# carry 6.4 lambda detectors inside a 53.3 lambda central region. Both scale
# linearly with the grid side.
_REFERENCE_SIDE = 106.0
_DETECTOR_SIDE_REF = 6.4
_REGION_SIDE_REF = 53.3

MSE = "mse"
SCE = "sce"


@dataclass(frozen=True)
class DetectorLayout:
    """D axis-aligned square detector regions; index == class label."""

    centers: tuple        # ((x, y), ...) in lambda
    side: float           # square side in lambda

    def __post_init__(self):
        half = self.side / 2.0
        pts = np.asarray(self.centers)
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                if (abs(pts[i, 0] - pts[j, 0]) < self.side
                        and abs(pts[i, 1] - pts[j, 1]) < self.side):
                    raise ValueError(f"detector regions {i} and {j} overlap")
        del half

    @property
    def n_classes(self):
        return len(self.centers)


def default_layout(grid, n_classes=10):
    """3-4-3 detector rows, maximally spaced in the scaled central region."""
    if n_classes != 10:
        raise ValueError("default layout is defined for 10 classes")
    side_lambda = min(grid.n_x, grid.n_y) * grid.dx
    scale = side_lambda / _REFERENCE_SIDE
    region = _REGION_SIDE_REF * scale
    # A side just above one pitch always captures a sample center; tiny
    # verification grids would otherwise scale detectors below one sample.
    det_side = max(_DETECTOR_SIDE_REF * scale, 1.01 * grid.dx)
    centers = []
    rows = [(region / 3.0, 3), (0.0, 4), (-region / 3.0, 3)]
    for y, count in rows:
        for i in range(count):
            x = -region / 2.0 + (i + 0.5) * region / count
            centers.append((x, y))
    return DetectorLayout(tuple(centers), det_side)


def detector_masks(layout, grid):
    """Boolean per-class masks: sample centers strictly inside each square."""
    x, y = grid.coords()
    half = layout.side / 2.0
    masks = np.zeros((layout.n_classes,) + grid.shape, dtype=bool)
    for l, (cx, cy) in enumerate(layout.centers):
        inside_x = np.abs(x - cx) < half
        inside_y = np.abs(y - cy) < half
        masks[l] = inside_y[:, None] & inside_x[None, :]
        if not masks[l].any():
            raise ValueError(f"detector {l} contains no sample centers")
    return masks


def detector_signals(intensity, layout, grid, masks=None):
    """Integrated intensity per detector, I_l = sum(S in region l) * dx^2.

    `intensity` may carry leading batch axes.
    """
    if masks is None:
        masks = detector_masks(layout, grid)
    flat = intensity.reshape(intensity.shape[:-2] + (-1,))
    mflat = masks.reshape(masks.shape[0], -1)
    return flat @ mflat.T * grid.cell_area


def classify(signals):
    """Argmax class; ties break toward the lowest index."""
    signals = np.asarray(signals)
    return np.argmax(signals, axis=-1)


def normalize_detectors(signals):
    """Scale detector signals into (0, 10): I' = I / max(I) * 10."""
    signals = np.asarray(signals, dtype=np.float64)
    if np.any(signals < 0):
        raise ValueError("detector signals must be nonnegative")
    m = signals.max(axis=-1, keepdims=True)
    safe = np.where(m > 0, m, 1.0)
    return np.where(m > 0, signals / safe * 10.0, 0.0)


def softmax(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def sce_loss(normalized, labels):
    """Softmax-cross-entropy, -log p[label], averaged over any batch axis."""
    p = softmax(normalized)
    labels = np.asarray(labels)
    if labels.ndim == p.ndim:          # one-hot
        picked = (p * labels).sum(axis=-1)
    else:
        picked = np.take_along_axis(p, labels[..., None], axis=-1)[..., 0]
    return float(np.mean(-np.log(picked)))


def mse_loss(intensity, target):
    """Mean squared error over all K output-plane samples."""
    intensity = np.asarray(intensity, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if intensity.shape[-2:] != target.shape[-2:]:
        raise ValueError("intensity and target grids differ")
    k = intensity.shape[-1] * intensity.shape[-2]
    per = ((intensity - target) ** 2).sum(axis=(-2, -1)) / k
    return float(np.mean(per))


def target_map(label, layout, grid, masks=None):
    """Uniform unit intensity inside the label's detector region, 0 elsewhere."""
    if masks is None:
        masks = detector_masks(layout, grid)
    if not 0 <= label < layout.n_classes:
        raise ValueError(f"invalid label {label}")
    return masks[label].astype(np.float64)


# ---------------------------------------------------------------------------
# Loss adjoints (dL/dS for the optical reverse pass)

def sce_loss_grad(signals, labels, layout, grid, masks):
    """Loss and dL/dS for softmax-cross-entropy on detector signals.

    signals: (B, D) raw detector intensities; returns (loss, dL/dS) with
    dL/dS shaped (B, n_y, n_x). Gradient of the (0, 10) normalization routes
    extra terms into the per-sample max detector.
    """
    b, d = signals.shape
    m = signals.max(axis=1, keepdims=True)
    kstar = signals.argmax(axis=1)
    safe_m = np.where(m > 0, m, 1.0)
    normalized = np.where(m > 0, signals / safe_m * 10.0, 0.0)
    p = softmax(normalized)
    onehot = np.zeros((b, d))
    onehot[np.arange(b), labels] = 1.0
    loss = float(np.mean(-np.log(p[np.arange(b), labels])))
    dnorm = (p - onehot) / b
    dsig = dnorm * 10.0 / safe_m
    corr = (dnorm * signals).sum(axis=1) * 10.0 / safe_m[:, 0] ** 2
    dsig[np.arange(b), kstar] -= corr
    dsig = np.where(m > 0, dsig, 0.0)
    dS = np.einsum("bd,dyx->byx", dsig, masks) * grid.cell_area
    return loss, dS


def mse_loss_grad(intensity, labels, layout, grid, masks):
    """Loss and dL/dS for per-sample MSE against the labels' target maps."""
    b = intensity.shape[0]
    k = intensity.shape[-1] * intensity.shape[-2]
    targets = masks[np.asarray(labels)].astype(intensity.dtype)
    diff = intensity - targets
    loss = float((diff ** 2).sum() / (k * b))
    dS = 2.0 * diff / (k * b)
    return loss, dS
