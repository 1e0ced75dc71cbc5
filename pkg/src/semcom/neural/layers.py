"""Small fixed layer vocabulary with hand-written forward/backward passes.

Every layer follows the same protocol: ``forward(x) -> (y, cache)`` and
``backward(gy, cache) -> gx``, where backward accumulates parameter gradients
into ``Parameter.grad``. Caches travel with the call instead of living on the
layer, so forward-only inference is safe from concurrent threads.

Feature maps are (N, C, H, W); dense activations are (N, F). Training runs in
float32; float64 ("checking mode") exists so gradient tests are not masked by
rounding.
"""

from __future__ import annotations

import numpy as np


class ShapeMismatchError(ValueError):
    pass


class Parameter:
    """Named trainable array paired with its gradient accumulator."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def _want(x: np.ndarray, ndim: int, what: str) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != ndim:
        raise ShapeMismatchError(f"{what}: expected {ndim}-d input, got shape {x.shape}")
    return x


class Dense:
    def __init__(self, in_features, out_features, rng, name="dense", dtype=np.float32):
        std = np.sqrt(2.0 / in_features)
        self.w = Parameter(
            f"{name}.w",
            (rng.standard_normal((out_features, in_features)) * std).astype(dtype),
        )
        self.b = Parameter(f"{name}.b", np.zeros(out_features, dtype=dtype))

    def parameters(self):
        return [self.w, self.b]

    def forward(self, x):
        x = _want(x, 2, self.w.name)
        if x.shape[1] != self.w.shape[1]:
            raise ShapeMismatchError(
                f"{self.w.name}: input has {x.shape[1]} features, weight expects {self.w.shape[1]}"
            )
        return x @ self.w.value.T + self.b.value, x

    def backward(self, gy, cache):
        x = cache
        self.w.grad += gy.T @ x
        self.b.grad += gy.sum(axis=0)
        return gy @ self.w.value


class Conv2d:
    """3x3 convolution, stride 1, zero padding 1 (shape-preserving)."""

    def __init__(self, in_channels, out_channels, rng, name="conv", dtype=np.float32):
        std = np.sqrt(2.0 / (in_channels * 9))
        self.w = Parameter(
            f"{name}.w",
            (rng.standard_normal((out_channels, in_channels, 3, 3)) * std).astype(dtype),
        )
        self.b = Parameter(f"{name}.b", np.zeros(out_channels, dtype=dtype))
        self.in_channels = in_channels
        self.out_channels = out_channels

    def parameters(self):
        return [self.w, self.b]

    def _im2col(self, x):
        n, c, h, w = x.shape
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        cols = np.empty((n, c, 3, 3, h, w), dtype=x.dtype)
        for ki in range(3):
            for kj in range(3):
                cols[:, :, ki, kj] = xp[:, :, ki : ki + h, kj : kj + w]
        return cols.reshape(n, c * 9, h * w)

    def forward(self, x):
        x = _want(x, 4, self.w.name)
        n, c, h, w = x.shape
        if c != self.in_channels:
            raise ShapeMismatchError(
                f"{self.w.name}: input has {c} channels, weight expects {self.in_channels}"
            )
        cols = self._im2col(x)
        wf = self.w.value.reshape(self.out_channels, c * 9)
        y = np.tensordot(wf, cols, axes=([1], [1]))  # (out, n, h*w)
        y = y.transpose(1, 0, 2).reshape(n, self.out_channels, h, w)
        y += self.b.value[None, :, None, None]
        return y, (cols, (n, c, h, w))

    def backward(self, gy, cache):
        cols, (n, c, h, w) = cache
        gy = _want(gy, 4, self.w.name)
        gyf = gy.reshape(n, self.out_channels, h * w)
        gw = np.tensordot(gyf, cols, axes=([0, 2], [0, 2]))
        self.w.grad += gw.reshape(self.w.shape)
        self.b.grad += gy.sum(axis=(0, 2, 3))
        wf = self.w.value.reshape(self.out_channels, c * 9)
        gcols = np.tensordot(gyf, wf, axes=([1], [0]))  # (n, h*w, c*9)
        gcols = gcols.transpose(0, 2, 1).reshape(n, c, 3, 3, h, w)
        gxp = np.zeros((n, c, h + 2, w + 2), dtype=gy.dtype)
        for ki in range(3):
            for kj in range(3):
                gxp[:, :, ki : ki + h, kj : kj + w] += gcols[:, :, ki, kj]
        return gxp[:, :, 1 : h + 1, 1 : w + 1]


class AvgPool2:
    """2x2 average pooling, halving both spatial extents."""

    def parameters(self):
        return []

    def forward(self, x):
        x = _want(x, 4, "avg_pool")
        n, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ShapeMismatchError(f"avg_pool: spatial dims must be even, got {h}x{w}")
        y = x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))
        return y, (h, w)

    def backward(self, gy, cache):
        h, w = cache
        gy = _want(gy, 4, "avg_pool")
        g = np.repeat(np.repeat(gy, 2, axis=2), 2, axis=3) / 4.0
        if g.shape[2:] != (h, w):
            raise ShapeMismatchError(
                f"avg_pool: gradient spatial {g.shape[2:]} != cached {(h, w)}"
            )
        return g


class UpsampleNearest2:
    """Nearest-neighbor 2x upsampling."""

    def parameters(self):
        return []

    def forward(self, x):
        x = _want(x, 4, "upsample")
        y = np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)
        return y, x.shape

    def backward(self, gy, cache):
        n, c, h, w = cache
        gy = _want(gy, 4, "upsample")
        if gy.shape != (n, c, 2 * h, 2 * w):
            raise ShapeMismatchError(
                f"upsample: gradient shape {gy.shape} != expected {(n, c, 2 * h, 2 * w)}"
            )
        return gy.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5))


class SiLU:
    """x * sigmoid(x), applied elementwise."""

    def parameters(self):
        return []

    def forward(self, x):
        s = 1.0 / (1.0 + np.exp(-x))
        return x * s, (x, s)

    def backward(self, gy, cache):
        x, s = cache
        return gy * (s + x * s * (1.0 - s))


class GroupNorm:
    """Per-sample group normalization with learned per-channel scale/shift."""

    def __init__(self, channels, rng=None, groups=4, name="gn", dtype=np.float32, eps=1e-5):
        if channels % groups:
            raise ShapeMismatchError(f"{name}: {channels} channels not divisible by {groups} groups")
        self.groups = groups
        self.channels = channels
        self.eps = eps
        self.gamma = Parameter(f"{name}.g", np.ones(channels, dtype=dtype))
        self.beta = Parameter(f"{name}.b", np.zeros(channels, dtype=dtype))

    def parameters(self):
        return [self.gamma, self.beta]

    def forward(self, x):
        x = _want(x, 4, self.gamma.name)
        n, c, h, w = x.shape
        if c != self.channels:
            raise ShapeMismatchError(
                f"{self.gamma.name}: input has {c} channels, expected {self.channels}"
            )
        g = self.groups
        xg = x.reshape(n, g, (c // g) * h * w)
        mu = xg.mean(axis=2, keepdims=True)
        inv = 1.0 / np.sqrt(xg.var(axis=2, keepdims=True) + self.eps)
        xhat = ((xg - mu) * inv).reshape(n, c, h, w)
        y = xhat * self.gamma.value[None, :, None, None] + self.beta.value[None, :, None, None]
        return y, (xhat, inv, (n, c, h, w))

    def backward(self, gy, cache):
        xhat, inv, (n, c, h, w) = cache
        g = self.groups
        self.gamma.grad += (gy * xhat).sum(axis=(0, 2, 3))
        self.beta.grad += gy.sum(axis=(0, 2, 3))
        gxhat = (gy * self.gamma.value[None, :, None, None]).reshape(n, g, -1)
        xh = xhat.reshape(n, g, -1)
        gx = inv * (
            gxhat
            - gxhat.mean(axis=2, keepdims=True)
            - xh * (gxhat * xh).mean(axis=2, keepdims=True)
        )
        return gx.reshape(n, c, h, w)


class ChannelConcat:
    """Concatenate feature maps along the channel axis."""

    def parameters(self):
        return []

    def forward(self, xs):
        xs = [_want(x, 4, "concat") for x in xs]
        base = xs[0].shape
        for x in xs[1:]:
            if x.shape[0] != base[0] or x.shape[2:] != base[2:]:
                raise ShapeMismatchError(
                    f"concat: incompatible shapes {base} vs {x.shape}"
                )
        return np.concatenate(xs, axis=1), [x.shape[1] for x in xs]

    def backward(self, gy, cache):
        splits = np.cumsum(cache)[:-1]
        return np.split(gy, splits, axis=1)


class Sequential:
    """Chain of layers sharing the forward/backward-with-cache protocol."""

    def __init__(self, layers):
        self.layers = list(layers)

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def forward(self, x):
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def backward(self, gy, caches):
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            gy = layer.backward(gy, cache)
        return gy
