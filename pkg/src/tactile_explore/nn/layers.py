"""Layer kinds with exact backward passes. Activations are channels-last (B, H, W, C)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..errors import InvalidParameterError, ShapeError

LAYER_KINDS = ("conv2d", "maxpool", "dropout", "dense", "relu", "flatten")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    args: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise InvalidParameterError(f"unknown layer kind {self.kind!r}")
        a = self.args
        if self.kind == "conv2d":
            if a.get("kernel", 0) < 1 or a.get("stride", 0) < 1 or a.get("filters", 0) < 1:
                raise InvalidParameterError(f"conv2d needs filters, kernel, stride >= 1: {a}")
        elif self.kind == "maxpool":
            if a.get("stride", 0) < 1:
                raise InvalidParameterError("maxpool stride must be >= 1")
        elif self.kind == "dropout":
            if not 0.0 <= a.get("p", -1) < 1.0:
                raise InvalidParameterError("dropout p must be in [0, 1)")
        elif self.kind == "dense":
            if a.get("out", 0) < 1:
                raise InvalidParameterError("dense needs out >= 1")

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.args}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        d = dict(d)
        kind = d.pop("kind")
        return cls(kind, d)


def conv2d(filters, kernel, stride):
    return LayerSpec("conv2d", {"filters": filters, "kernel": kernel, "stride": stride})


def maxpool(stride):
    return LayerSpec("maxpool", {"stride": stride})


def dropout(p):
    return LayerSpec("dropout", {"p": p})


def dense(out, in_features=None, gain=None):
    args = {"out": out}
    if in_features is not None:
        args["in"] = in_features
    if gain is not None:
        args["gain"] = gain
    return LayerSpec("dense", args)


def relu():
    return LayerSpec("relu")


def flatten():
    return LayerSpec("flatten")


class Layer:
    kind = ""

    def __init__(self, spec: LayerSpec):
        self.spec = spec
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def build(self, in_shape, rng, dtype):
        """Allocate parameters for per-sample input shape ``in_shape``; return the output shape."""
        self.in_shape = tuple(in_shape)
        self.out_shape = self._build(self.in_shape, rng, dtype)
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)
        return self.out_shape

    def _build(self, in_shape, rng, dtype):
        return in_shape

    def forward(self, x, train, rng):
        raise NotImplementedError

    def backward(self, cache, dy, need_dx=True):
        raise NotImplementedError


class Conv2D(Layer):
    """Zero-padded convolution (padding ``kernel // 2``), weights stored as (k, k, C_in, F)."""

    kind = "conv2d"

    def _build(self, in_shape, rng, dtype):
        if len(in_shape) != 3:
            raise ShapeError(f"conv2d expects (H, W, C) input, got {in_shape}")
        H, W, C = in_shape
        a = self.spec.args
        self.k, self.stride, self.filters = a["kernel"], a["stride"], a["filters"]
        self.pad = self.k // 2
        Ho = kernels.conv_output_size(H, self.k, self.stride, self.pad)
        Wo = kernels.conv_output_size(W, self.k, self.stride, self.pad)
        if Ho < 1 or Wo < 1:
            raise ShapeError(f"conv2d output would be empty for input {in_shape}")
        fan_in = self.k * self.k * C
        self.params["W"] = (rng.standard_normal((self.k, self.k, C, self.filters)) * np.sqrt(2.0 / fan_in)).astype(dtype)
        self.params["b"] = np.zeros(self.filters, dtype=dtype)
        return (Ho, Wo, self.filters)

    def forward(self, x, train, rng):
        B = x.shape[0]
        cols = kernels.im2col(x, self.k, self.stride, self.pad)
        W = self.params["W"].reshape(-1, self.filters)
        y = cols @ W
        y += self.params["b"]
        Ho, Wo, F = self.out_shape
        return y.reshape(B, Ho, Wo, F), (cols, x.shape)

    def backward(self, cache, dy, need_dx=True):
        cols, x_shape = cache
        dy2 = dy.reshape(-1, self.filters)
        self.grads["W"] += (cols.T @ dy2).reshape(self.params["W"].shape)
        self.grads["b"] += dy2.sum(axis=0)
        if not need_dx:
            return None
        dcols = dy2 @ self.params["W"].reshape(-1, self.filters).T
        return kernels.col2im(dcols, x_shape, self.k, self.stride, self.pad)


class MaxPool2D(Layer):
    kind = "maxpool"

    def _build(self, in_shape, rng, dtype):
        if len(in_shape) != 3:
            raise ShapeError(f"maxpool expects (H, W, C) input, got {in_shape}")
        self.s = self.spec.args["stride"]
        H, W, C = in_shape
        if H // self.s < 1 or W // self.s < 1:
            raise ShapeError(f"maxpool stride {self.s} too large for input {in_shape}")
        return (H // self.s, W // self.s, C)

    def forward(self, x, train, rng):
        out, idx = kernels.maxpool_forward(x, self.s)
        return out, (idx, x.shape)

    def backward(self, cache, dy, need_dx=True):
        if not need_dx:
            return None
        idx, x_shape = cache
        return kernels.maxpool_backward(dy, idx, x_shape, self.s)


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train, rng):
        mask = x > 0
        return x * mask, mask

    def backward(self, cache, dy, need_dx=True):
        return dy * cache if need_dx else None


class Dropout(Layer):
    """Inverted dropout: kept activations are scaled by 1 / (1 - p) at train time."""

    kind = "dropout"

    def _build(self, in_shape, rng, dtype):
        self.p = self.spec.args["p"]
        return in_shape

    def forward(self, x, train, rng):
        if not train or self.p == 0.0:
            return x, None
        keep = 1.0 - self.p
        mask = (rng.random(x.shape) < keep).astype(x.dtype) / x.dtype.type(keep)
        return x * mask, mask

    def backward(self, cache, dy, need_dx=True):
        if not need_dx:
            return None
        return dy if cache is None else dy * cache


class Flatten(Layer):
    kind = "flatten"

    def _build(self, in_shape, rng, dtype):
        return (int(np.prod(in_shape)),)

    def forward(self, x, train, rng):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, cache, dy, need_dx=True):
        return dy.reshape(cache) if need_dx else None


class Dense(Layer):
    """y = x W + b with W of shape (in, out)."""

    kind = "dense"

    def _build(self, in_shape, rng, dtype):
        if len(in_shape) != 1:
            raise ShapeError(f"dense expects flat input, got {in_shape}; add a flatten layer")
        a = self.spec.args
        n_in = in_shape[0]
        if "in" in a and a["in"] != n_in:
            raise ShapeError(f"dense declared in={a['in']} but receives {n_in}")
        gain = a.get("gain", np.sqrt(2.0))
        self.params["W"] = (rng.standard_normal((n_in, a["out"])) * gain / np.sqrt(n_in)).astype(dtype)
        self.params["b"] = np.zeros(a["out"], dtype=dtype)
        return (a["out"],)

    def forward(self, x, train, rng):
        return x @ self.params["W"] + self.params["b"], x

    def backward(self, cache, dy, need_dx=True):
        x = cache
        self.grads["W"] += x.T @ dy
        self.grads["b"] += dy.sum(axis=0)
        return dy @ self.params["W"].T if need_dx else None


LAYER_CLASSES = {cls.kind: cls for cls in (Conv2D, MaxPool2D, ReLU, Dropout, Flatten, Dense)}


def make_layer(spec: LayerSpec) -> Layer:
    return LAYER_CLASSES[spec.kind](spec)
