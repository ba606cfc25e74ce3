"""IDX dataset ingestion and deterministic splitting."""

import gzip
import struct
from dataclasses import dataclass

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class IdxFormatError(Exception):
    pass


@dataclass
class LabeledImageSet:
    """N grayscale images in [0,1] with labels 0..9."""

    images: np.ndarray   # (N, H, W) float32
    labels: np.ndarray   # (N,) int64

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError("image/label count mismatch")

    def __len__(self):
        return len(self.images)

    def subset(self, indices):
        return LabeledImageSet(self.images[indices], self.labels[indices])


def _open(path):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise IdxFormatError(f"truncated IDX file while reading {what}")
    return data


def load_idx(images_path, labels_path):
    """Parse a big-endian IDX image/label file pair; pixels scaled by 1/255."""
    with _open(images_path) as fh:
        magic, n, rows, cols = struct.unpack(">IIII", _read(fh, 16, "image header"))
        if magic != IMAGE_MAGIC:
            raise IdxFormatError(f"bad image magic 0x{magic:08x}")
        raw = _read(fh, n * rows * cols, "image payload")
    images = np.frombuffer(raw, dtype=np.uint8).reshape(n, rows, cols)
    images = images.astype(np.float32) / 255.0
    with _open(labels_path) as fh:
        magic, n_labels = struct.unpack(">II", _read(fh, 8, "label header"))
        if magic != LABEL_MAGIC:
            raise IdxFormatError(f"bad label magic 0x{magic:08x}")
        if n_labels != n:
            raise IdxFormatError(f"label count {n_labels} != image count {n}")
        raw = _read(fh, n_labels, "label payload")
    labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)
    return LabeledImageSet(images, labels)


def save_idx(images, labels, images_path, labels_path):
    """Write uint8 IDX files (inverse of load_idx; used for fixtures)."""
    images = np.asarray(images)
    if images.dtype != np.uint8:
        images = np.clip(np.round(images * 255.0), 0, 255).astype(np.uint8)
    n, rows, cols = images.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", LABEL_MAGIC, n))
        fh.write(np.asarray(labels, dtype=np.uint8).tobytes())


def split(train_set, test_set, seed, n_train=55000, n_val=5000):
    """Shuffle the training pool into train/validation; test is as published."""
    if len(train_set) < n_train + n_val:
        raise ValueError(f"training pool has {len(train_set)} samples, "
                         f"need {n_train + n_val}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(train_set))
    train = train_set.subset(order[:n_train])
    val = train_set.subset(order[n_train:n_train + n_val])
    return train, val, test_set


def stratified_subsample(dataset, n, seed, n_classes=10):
    """Class-balanced subset of size n, deterministic per seed."""
    rng = np.random.default_rng(seed)
    per_class = n // n_classes
    extra = n % n_classes
    chosen = []
    for c in range(n_classes):
        idx = np.flatnonzero(dataset.labels == c)
        want = per_class + (1 if c < extra else 0)
        if len(idx) < want:
            raise ValueError(f"class {c} has only {len(idx)} samples, need {want}")
        chosen.append(rng.permutation(idx)[:want])
    chosen = np.sort(np.concatenate(chosen))
    return dataset.subset(chosen)


def desk_scale_splits(train_set, test_set, seed,
                      n_train=10000, n_val=1000, n_test=2000):
    """Standard split followed by stratified desk-scale subsetting."""
    train, val, test = split(train_set, test_set, seed)
    return (stratified_subsample(train, n_train, seed),
            stratified_subsample(val, n_val, seed),
            stratified_subsample(test, n_test, seed))
