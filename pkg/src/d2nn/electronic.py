"""Minimal differentiable electronic back-ends.

A batch-normalization stage sits at the sensor interface, followed by either
a single fully-connected layer or the small two-conv/two-FC CNN (one feature
per conv layer). Forward and reverse passes are written directly in numpy;
losses are softmax-cross-entropy on the logits.
"""

from dataclasses import dataclass, field

import numpy as np

from .detection import softmax

FC = "fc"
CONV2F1 = "2c2f1"


def relu(x):
    return np.maximum(x, 0.0)


@dataclass
class BatchNormStage:
    """Per-feature batch normalization over flattened sensor pixels.

    `momentum` is the weight of the newest batch in the running statistics
    (momentum=1 makes the running stats equal to the last batch).
    """

    n_features: int
    momentum: float = 0.1
    eps: float = 1e-5
    scale: np.ndarray = None
    shift: np.ndarray = None
    running_mean: np.ndarray = None
    running_var: np.ndarray = None

    def __post_init__(self):
        if self.scale is None:
            self.scale = np.ones(self.n_features)
        if self.shift is None:
            self.shift = np.zeros(self.n_features)
        if self.running_mean is None:
            self.running_mean = np.zeros(self.n_features)
        if self.running_var is None:
            self.running_var = np.ones(self.n_features)

    def forward(self, x, training):
        """x: (B, n_features). Returns (y, cache for backward)."""
        if training:
            if x.shape[0] < 2:
                raise ValueError("batch normalization needs batch size >= 2 in training mode")
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * var
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        y = self.scale * xhat + self.shift
        return y, (xhat, inv_std, training, x.shape[0])

    def backward(self, dy, cache):
        """Returns (dscale, dshift, dx)."""
        xhat, inv_std, training, b = cache
        dscale = (dy * xhat).sum(axis=0)
        dshift = dy.sum(axis=0)
        dxhat = dy * self.scale
        if training:
            dx = inv_std / b * (b * dxhat - dxhat.sum(axis=0)
                                - xhat * (dxhat * xhat).sum(axis=0))
        else:
            dx = dxhat * inv_std
        return dscale, dshift, dx


def glorot_uniform(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass
class FCLayer:
    """Single fully-connected layer, y = x @ W + b."""

    weights: np.ndarray
    biases: np.ndarray

    def forward(self, x):
        return x @ self.weights + self.biases

    def backward(self, x, dy):
        return x.T @ dy, dy.sum(axis=0), dy @ self.weights.T


def conv2d_single(x, kernel, bias, stride):
    """Valid single-channel convolution (cross-correlation), batched input."""
    b, h, w = x.shape
    kh, kw = kernel.shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    out = np.full((b, oh, ow), bias)
    for p in range(kh):
        for q in range(kw):
            out += kernel[p, q] * x[:, p:p + oh * stride:stride, q:q + ow * stride:stride]
    return out


def conv2d_single_backward(x, kernel, stride, dy):
    """Gradients (dkernel, dbias, dx) of conv2d_single."""
    b, oh, ow = dy.shape
    kh, kw = kernel.shape
    dk = np.zeros_like(kernel)
    dx = np.zeros_like(x)
    for p in range(kh):
        for q in range(kw):
            patch = x[:, p:p + oh * stride:stride, q:q + ow * stride:stride]
            dk[p, q] = np.sum(dy * patch)
            dx[:, p:p + oh * stride:stride, q:q + ow * stride:stride] += kernel[p, q] * dy
    return dk, float(dy.sum()), dx


class ElectronicNet:
    """Common interface: batch-norm input stage plus a differentiable head.

    forward() maps a (B, p, p) sensor intensity batch to (B, n_classes)
    logits; backward() returns parameter gradients and the gradient with
    respect to the sensor input, for chaining into the optical adjoint.
    """

    kind = None

    def __init__(self, sensor_pixels, n_classes=10):
        self.p = sensor_pixels
        self.n_classes = n_classes
        self.bn = BatchNormStage(sensor_pixels * sensor_pixels)

    def params(self):
        d = {"bn.scale": self.bn.scale, "bn.shift": self.bn.shift}
        d.update(self._head_params())
        return d

    def set_params(self, params):
        self.bn.scale = params["bn.scale"]
        self.bn.shift = params["bn.shift"]
        self._set_head_params(params)

    def state_arrays(self):
        """All arrays (trainable + running stats) for checkpointing."""
        d = dict(self.params())
        d["bn.running_mean"] = self.bn.running_mean
        d["bn.running_var"] = self.bn.running_var
        return d

    def load_state(self, arrays):
        self.set_params({k: arrays[k].copy() for k in self.params()})
        self.bn.running_mean = arrays["bn.running_mean"].copy()
        self.bn.running_var = arrays["bn.running_var"].copy()

    def snapshot(self):
        return {k: v.copy() for k, v in self.state_arrays().items()}

    def restore(self, snap):
        self.load_state(snap)


class FCNet(ElectronicNet):
    """Batch-norm followed by one fully-connected layer."""

    kind = FC

    def __init__(self, sensor_pixels, n_classes=10, rng=None):
        super().__init__(sensor_pixels, n_classes)
        rng = rng or np.random.default_rng(0)
        d_in = sensor_pixels * sensor_pixels
        self.fc = FCLayer(glorot_uniform(rng, d_in, n_classes, (d_in, n_classes)),
                          np.zeros(n_classes))

    def _head_params(self):
        return {"fc.w": self.fc.weights, "fc.b": self.fc.biases}

    def _set_head_params(self, params):
        self.fc.weights = params["fc.w"]
        self.fc.biases = params["fc.b"]

    def forward(self, sensor, training):
        x = sensor.reshape(sensor.shape[0], -1).astype(np.float64)
        h, bn_cache = self.bn.forward(x, training)
        logits = self.fc.forward(h)
        self._cache = (x, h, bn_cache)
        return logits

    def backward(self, dlogits):
        x, h, bn_cache = self._cache
        dw, db, dh = self.fc.backward(h, dlogits)
        dscale, dshift, dx = self.bn.backward(dh, bn_cache)
        grads = {"fc.w": dw, "fc.b": db, "bn.scale": dscale, "bn.shift": dshift}
        return grads, dx.reshape(-1, self.p, self.p)


class Conv2F1Net(ElectronicNet):
    """Two single-feature conv layers plus two FC layers, ReLU activations.

    Strides are 1 for a 10x10 sensor and 2 for 25x25 / 50x50.
    """

    kind = CONV2F1

    def __init__(self, sensor_pixels, n_classes=10, rng=None):
        super().__init__(sensor_pixels, n_classes)
        if sensor_pixels not in (10, 25, 50):
            raise ValueError("2C2F-1 is defined for 10x10, 25x25 or 50x50 sensors")
        rng = rng or np.random.default_rng(0)
        self.stride = 1 if sensor_pixels == 10 else 2
        self.k1 = glorot_uniform(rng, 36, 36, (6, 6))
        self.b1 = 0.0
        self.k2 = glorot_uniform(rng, 9, 9, (3, 3))
        self.b2 = 0.0
        o1 = (sensor_pixels - 6) // self.stride + 1
        o2 = (o1 - 3) // self.stride + 1
        self.flat = o2 * o2
        self.fc1 = FCLayer(glorot_uniform(rng, self.flat, 30, (self.flat, 30)), np.zeros(30))
        self.fc2 = FCLayer(glorot_uniform(rng, 30, n_classes, (30, n_classes)),
                           np.zeros(n_classes))

    def _head_params(self):
        return {"conv1.k": self.k1, "conv1.b": np.asarray(self.b1),
                "conv2.k": self.k2, "conv2.b": np.asarray(self.b2),
                "fc1.w": self.fc1.weights, "fc1.b": self.fc1.biases,
                "fc2.w": self.fc2.weights, "fc2.b": self.fc2.biases}

    def _set_head_params(self, params):
        self.k1 = params["conv1.k"]
        self.b1 = float(params["conv1.b"])
        self.k2 = params["conv2.k"]
        self.b2 = float(params["conv2.b"])
        self.fc1.weights = params["fc1.w"]
        self.fc1.biases = params["fc1.b"]
        self.fc2.weights = params["fc2.w"]
        self.fc2.biases = params["fc2.b"]

    def forward(self, sensor, training):
        x = sensor.astype(np.float64)
        flat_in = x.reshape(x.shape[0], -1)
        hbn, bn_cache = self.bn.forward(flat_in, training)
        xb = hbn.reshape(x.shape)
        c1 = conv2d_single(xb, self.k1, self.b1, self.stride)
        r1 = relu(c1)
        c2 = conv2d_single(r1, self.k2, self.b2, self.stride)
        r2 = relu(c2)
        f = r2.reshape(x.shape[0], -1)
        h1 = relu(self.fc1.forward(f))
        logits = self.fc2.forward(h1)
        self._cache = (bn_cache, xb, c1, r1, c2, r2, f, h1)
        return logits

    def backward(self, dlogits):
        bn_cache, xb, c1, r1, c2, r2, f, h1 = self._cache
        dw2, db2, dh1 = self.fc2.backward(h1, dlogits)
        dh1 = dh1 * (h1 > 0)
        dw1, db1, df = self.fc1.backward(f, dh1)
        dr2 = df.reshape(r2.shape) * (c2 > 0)
        dk2, dbias2, dr1 = conv2d_single_backward(r1, self.k2, self.stride, dr2)
        dr1 = dr1 * (c1 > 0)
        dk1, dbias1, dxb = conv2d_single_backward(xb, self.k1, self.stride, dr1)
        dflat = dxb.reshape(dxb.shape[0], -1)
        dscale, dshift, dx = self.bn.backward(dflat, bn_cache)
        grads = {"conv1.k": dk1, "conv1.b": np.asarray(dbias1),
                 "conv2.k": dk2, "conv2.b": np.asarray(dbias2),
                 "fc1.w": dw1, "fc1.b": db1,
                 "fc2.w": dw2, "fc2.b": db2,
                 "bn.scale": dscale, "bn.shift": dshift}
        return grads, dx.reshape(-1, self.p, self.p)


def make_net(kind, sensor_pixels, n_classes=10, rng=None):
    if kind == FC:
        return FCNet(sensor_pixels, n_classes, rng)
    if kind == CONV2F1:
        return Conv2F1Net(sensor_pixels, n_classes, rng)
    raise ValueError(f"unknown electronic net kind {kind!r}")


def softmax_ce_loss_grad(logits, labels):
    """Mean softmax-cross-entropy over the batch; returns (loss, dlogits)."""
    b = logits.shape[0]
    p = softmax(logits)
    labels = np.asarray(labels)
    loss = float(np.mean(-np.log(p[np.arange(b), labels])))
    onehot = np.zeros_like(p)
    onehot[np.arange(b), labels] = 1.0
    return loss, (p - onehot) / b


def conv2f1_forward(sensor_image, net):
    """Class probabilities for one sensor image (inference mode)."""
    logits = net.forward(sensor_image[None], training=False)
    return softmax(logits)[0]


def fc_forward(x, layer):
    """y = W^T x + b for a single input vector."""
    return layer.forward(np.asarray(x, dtype=np.float64)[None])[0]
