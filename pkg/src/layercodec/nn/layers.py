"""Layer objects: parameters, single-pass forward/backward caching."""

from __future__ import annotations

import numpy as np

from . import ops


class Parameter:
    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)

    @property
    def shape(self):
        return self.value.shape


class Layer:
    """Base: forward caches whatever backward needs; one backward per forward."""

    def params(self) -> list[Parameter]:
        return []

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError


class Conv2d(Layer):
    def __init__(self, cin, cout, kernel, stride, rng, name):
        if kernel % 2 == 0:
            raise ValueError("conv kernels must be odd")
        if stride not in (1, 2):
            raise ValueError("stride must be 1 or 2")
        self.stride = stride
        self.weight = Parameter(f"{name}.weight",
                                ops.he_uniform(rng, (cout, cin, kernel, kernel),
                                               fan_in=cin * kernel * kernel))
        self.bias = Parameter(f"{name}.bias", np.zeros(cout, dtype=np.float32))
        self._cache = None

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x):
        y, self._cache = ops.conv2d_forward(x, self.weight.value,
                                            self.bias.value, self.stride)
        return y

    def backward(self, dy):
        dx, dw, db = ops.conv2d_backward(dy, self._cache)
        self.weight.grad += dw
        self.bias.grad += db
        return dx


class ConvTranspose2d(Layer):
    def __init__(self, cin, cout, kernel, stride, rng, name):
        if kernel % 2 == 0:
            raise ValueError("tconv kernels must be odd")
        self.stride = stride
        self.weight = Parameter(f"{name}.weight",
                                ops.he_uniform(rng, (cin, cout, kernel, kernel),
                                               fan_in=cin * kernel * kernel))
        self.bias = Parameter(f"{name}.bias", np.zeros(cout, dtype=np.float32))
        self._cache = None

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x):
        y, self._cache = ops.conv_transpose2d_forward(x, self.weight.value,
                                                      self.bias.value, self.stride)
        return y

    def backward(self, dy):
        dx, dw, db = ops.conv_transpose2d_backward(dy, self._cache)
        self.weight.grad += dw
        self.bias.grad += db
        return dx


class Norm(Layer):
    def __init__(self, kind, channels, name, eps=1e-5):
        if kind not in ops.NORM_AXES:
            raise ValueError(f"unknown norm kind {kind!r}")
        self.kind = kind
        self.eps = eps
        self.gain = Parameter(f"{name}.gain", np.ones(channels, dtype=np.float32))
        self.offset = Parameter(f"{name}.offset", np.zeros(channels, dtype=np.float32))
        self._cache = None

    def params(self):
        return [self.gain, self.offset]

    def forward(self, x):
        y, self._cache = ops.norm_forward(x, self.gain.value, self.offset.value,
                                          self.kind, self.eps)
        return y

    def backward(self, dy):
        dx, dgain, doffset = ops.norm_backward(dy, self._cache)
        self.gain.grad += dgain
        self.offset.grad += doffset
        return dx


class ReLU(Layer):
    def forward(self, x):
        y, self._mask = ops.relu_forward(x)
        return y

    def backward(self, dy):
        return ops.relu_backward(dy, self._mask)


class Tanh(Layer):
    def forward(self, x):
        y, self._y = ops.tanh_forward(x)
        return y

    def backward(self, dy):
        return ops.tanh_backward(dy, self._y)


class Sequential(Layer):
    def __init__(self, layers):
        self.layers = list(layers)

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy


class ResBlock(Layer):
    """conv-norm-relu-conv-norm with an identity skip; no activation after add."""

    def __init__(self, channels, norm_kind, rng, name):
        self.body = Sequential([
            Conv2d(channels, channels, 3, 1, rng, f"{name}.conv1"),
            Norm(norm_kind, channels, f"{name}.norm1"),
            ReLU(),
            Conv2d(channels, channels, 3, 1, rng, f"{name}.conv2"),
            Norm(norm_kind, channels, f"{name}.norm2"),
        ])

    def params(self):
        return self.body.params()

    def forward(self, x):
        return x + self.body.forward(x)

    def backward(self, dy):
        return dy + self.body.backward(dy)
