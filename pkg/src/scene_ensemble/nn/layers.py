"""Layers with explicit forward/backward passes.

Every layer works on a leading batch axis. ``forward`` caches what
``backward`` needs; ``backward`` returns the gradient w.r.t. the input and
accumulates parameter gradients into ``self.grads``.
"""

import numpy as np

from . import kernels


class MissingCacheError(RuntimeError):
    """backward() called before a caching forward()."""


class ShapeError(ValueError):
    pass


def glorot_uniform(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """Base class; parameter-free layers keep empty dicts."""

    def __init__(self):
        self.params = {}
        self.grads = {}
        self._cache = None

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def output_shape(self, in_shape):
        return tuple(in_shape)

    def zero_grad(self):
        for g in self.grads.values():
            g[...] = 0

    def astype(self, dtype):
        for k in self.params:
            self.params[k] = self.params[k].astype(dtype)
            self.grads[k] = np.zeros_like(self.params[k])
        return self

    def _need_cache(self):
        if self._cache is None:
            raise MissingCacheError(f"{type(self).__name__}.backward called without a cached forward")
        return self._cache

    def _init_grads(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}


def _same_pad(k):
    before = (k - 1) // 2
    return before, k - 1 - before


class Conv2D(Layer):
    """Multi-channel 2-D convolution (cross-correlation), stride 1.

    ``weight`` is ``[filters, in_channels, kh, kw]``; input ``[N, C, H, W]``.
    """

    def __init__(self, in_channels, filters, kernel_size, padding="same",
                 rng=None, dtype=np.float32):
        super().__init__()
        if padding not in ("same", "valid"):
            raise ValueError(f"unknown padding {padding!r}")
        kh, kw = (kernel_size, kernel_size) if np.isscalar(kernel_size) else kernel_size
        self.in_channels, self.filters = in_channels, filters
        self.kh, self.kw, self.padding = int(kh), int(kw), padding
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = in_channels * self.kh * self.kw
        fan_out = filters * self.kh * self.kw
        self.params = {
            "weight": glorot_uniform(rng, (filters, in_channels, self.kh, self.kw), fan_in, fan_out, dtype),
            "bias": np.zeros(filters, dtype=dtype),
        }
        self._init_grads()

    def _pads(self):
        if self.padding == "valid":
            return (0, 0), (0, 0)
        return _same_pad(self.kh), _same_pad(self.kw)

    def output_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.in_channels:
            raise ShapeError(f"conv2d expects {self.in_channels} channels, got {c}")
        (pt, pb), (pl, pr) = self._pads()
        ho, wo = h + pt + pb - self.kh + 1, w + pl + pr - self.kw + 1
        if ho < 1 or wo < 1:
            raise ShapeError(f"kernel {self.kh}x{self.kw} does not fit input {h}x{w}")
        return (self.filters, ho, wo)

    def forward(self, x, training=False):
        if x.ndim != 4:
            raise ShapeError(f"conv2d input must be [N, C, H, W], got shape {x.shape}")
        _, ho, wo = self.output_shape(x.shape[1:])
        (pt, pb), (pl, pr) = self._pads()
        if pt or pb or pl or pr:
            x = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
        cols = kernels.im2col(x, self.kh, self.kw)              # N, C*kh*kw, Ho*Wo
        w = self.params["weight"].reshape(self.filters, -1)
        out = np.matmul(w, cols) + self.params["bias"][None, :, None]
        self._cache = (x.shape, cols)
        return out.reshape(x.shape[0], self.filters, ho, wo)

    def backward(self, grad):
        padded_shape, cols = self._need_cache()
        n = grad.shape[0]
        g = grad.reshape(n, self.filters, -1)
        w = self.params["weight"].reshape(self.filters, -1)
        self.grads["weight"] += np.tensordot(g, cols, axes=([0, 2], [0, 2])).reshape(self.params["weight"].shape)
        self.grads["bias"] += g.sum(axis=(0, 2))
        dcols = np.matmul(w.T, g)
        dx = kernels.col2im(dcols, padded_shape, self.kh, self.kw)
        (pt, pb), (pl, pr) = self._pads()
        return dx[:, :, pt:dx.shape[2] - pb, pl:dx.shape[3] - pr]


class Conv1D(Layer):
    """1-D convolution over time, stride 1, channels-last ``[N, T, C]``.

    ``weight`` is ``[filters, in_channels, k]``.
    """

    def __init__(self, in_channels, filters, kernel_size, padding="valid",
                 rng=None, dtype=np.float32):
        super().__init__()
        if padding not in ("same", "valid"):
            raise ValueError(f"unknown padding {padding!r}")
        self.in_channels, self.filters, self.k = in_channels, filters, int(kernel_size)
        self.padding = padding
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = {
            "weight": glorot_uniform(rng, (filters, in_channels, self.k),
                                     in_channels * self.k, filters * self.k, dtype),
            "bias": np.zeros(filters, dtype=dtype),
        }
        self._init_grads()

    def _pad(self):
        return (0, 0) if self.padding == "valid" else _same_pad(self.k)

    def output_shape(self, in_shape):
        t, c = in_shape
        if c != self.in_channels:
            raise ShapeError(f"conv1d expects {self.in_channels} channels, got {c}")
        lo, hi = self._pad()
        to = t + lo + hi - self.k + 1
        if to < 1:
            raise ShapeError(f"kernel {self.k} does not fit sequence of length {t}")
        return (to, self.filters)

    def forward(self, x, training=False):
        if x.ndim != 3:
            raise ShapeError(f"conv1d input must be [N, T, C], got shape {x.shape}")
        to, _ = self.output_shape(x.shape[1:])
        lo, hi = self._pad()
        if lo or hi:
            x = np.pad(x, ((0, 0), (lo, hi), (0, 0)))
        x4 = x.transpose(0, 2, 1)[:, :, None, :]                 # N, C, 1, T
        cols = kernels.im2col(x4, 1, self.k)                     # N, C*k, To
        w = self.params["weight"].reshape(self.filters, -1)
        out = np.matmul(w, cols) + self.params["bias"][None, :, None]
        self._cache = (x4.shape, cols)
        return out.transpose(0, 2, 1).reshape(x.shape[0], to, self.filters)

    def backward(self, grad):
        shape4, cols = self._need_cache()
        g = np.ascontiguousarray(grad.transpose(0, 2, 1))       # N, F, To
        w = self.params["weight"].reshape(self.filters, -1)
        self.grads["weight"] += np.tensordot(g, cols, axes=([0, 2], [0, 2])).reshape(self.params["weight"].shape)
        self.grads["bias"] += g.sum(axis=(0, 2))
        dx4 = kernels.col2im(np.matmul(w.T, g), shape4, 1, self.k)
        dx = dx4[:, :, 0, :].transpose(0, 2, 1)
        lo, hi = self._pad()
        return dx[:, lo:dx.shape[1] - hi, :]


class MaxPool2D(Layer):
    """Non-overlapping max pool; remainder rows/cols are dropped."""

    def __init__(self, pool_size=2):
        super().__init__()
        self.k = int(pool_size)

    def output_shape(self, in_shape):
        c, h, w = in_shape
        if h // self.k < 1 or w // self.k < 1:
            raise ShapeError(f"pool {self.k} larger than input {h}x{w}")
        return (c, h // self.k, w // self.k)

    def forward(self, x, training=False):
        out, arg = kernels.maxpool_forward(x, self.k, self.k)
        self._cache = (x.shape, arg)
        return out

    def backward(self, grad):
        shape, arg = self._need_cache()
        return kernels.maxpool_backward(grad, arg, shape, self.k, self.k)


class MaxPool1D(Layer):
    """Max pool over the time axis of ``[N, T, C]``."""

    def __init__(self, pool_size=2):
        super().__init__()
        self.k = int(pool_size)

    def output_shape(self, in_shape):
        t, c = in_shape
        if t // self.k < 1:
            raise ShapeError(f"pool {self.k} larger than sequence length {t}")
        return (t // self.k, c)

    def forward(self, x, training=False):
        x4 = x.transpose(0, 2, 1)[:, :, None, :]
        out, arg = kernels.maxpool_forward(x4, 1, self.k)
        self._cache = (x4.shape, arg)
        return out[:, :, 0, :].transpose(0, 2, 1)

    def backward(self, grad):
        shape4, arg = self._need_cache()
        g4 = grad.transpose(0, 2, 1)[:, :, None, :]
        dx4 = kernels.maxpool_backward(g4, arg, shape4, 1, self.k)
        return dx4[:, :, 0, :].transpose(0, 2, 1)


class Flatten(Layer):
    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, training=False):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._need_cache())


class Dense(Layer):
    """Fully connected ``y = W x + b`` with ``W`` of shape ``[out, in]``."""

    def __init__(self, in_features, units, rng=None, dtype=np.float32):
        super().__init__()
        self.in_features, self.units = in_features, units
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = {
            "weight": glorot_uniform(rng, (units, in_features), in_features, units, dtype),
            "bias": np.zeros(units, dtype=dtype),
        }
        self._init_grads()

    def output_shape(self, in_shape):
        if tuple(in_shape) != (self.in_features,):
            raise ShapeError(f"dense expects ({self.in_features},), got {tuple(in_shape)}")
        return (self.units,)

    def forward(self, x, training=False):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f"dense expects [N, {self.in_features}], got {x.shape}")
        self._cache = x
        return x @ self.params["weight"].T + self.params["bias"]

    def backward(self, grad):
        x = self._need_cache()
        self.grads["weight"] += grad.T @ x
        self.grads["bias"] += grad.sum(axis=0)
        return grad @ self.params["weight"]


def relu(x):
    return np.maximum(x, 0)


def relu_backward(grad, x):
    # derivative at exactly 0 is taken as 0
    return grad * (x > 0)


class ReLU(Layer):
    def forward(self, x, training=False):
        self._cache = x
        return relu(x)

    def backward(self, grad):
        return relu_backward(grad, self._need_cache())


def dropout(x, rate, training, rng):
    """Inverted dropout. Returns ``(output, mask)``; mask is None when inactive."""
    if not 0 <= rate < 1:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0:
        return x, None
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / x.dtype.type(1 - rate)
    return x * mask, mask


class Dropout(Layer):
    def __init__(self, rate, rng=None):
        super().__init__()
        if not 0 <= rate < 1:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def forward(self, x, training=False):
        out, mask = dropout(x, self.rate, training, self.rng)
        self._cache = (mask,)
        return out

    def backward(self, grad):
        (mask,) = self._need_cache()
        return grad if mask is None else grad * mask
