"""Functional forward/backward primitives on (batch, channels, H, W) arrays.

Convolution is cross-correlation (no kernel flip). Spatial padding is
always kernel//2, which keeps stride-1 outputs the same size and makes
stride-2 outputs exactly ceil(in/2). Transposed convolution is the exact
adjoint of the matching strided convolution, sized so spatial dims double
at stride 2.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided


def im2col(x: np.ndarray, k: int, stride: int, padding: int) -> np.ndarray:
    """Unfold (N,C,H,W) into (N, C*k*k, out_h*out_w) patch columns."""
    n, c, h, w = x.shape
    out_h = (h + 2 * padding - k) // stride + 1
    out_w = (w + 2 * padding - k) // stride + 1
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    s0, s1, s2, s3 = x.strides
    windows = as_strided(
        x,
        shape=(n, c, k, k, out_h, out_w),
        strides=(s0, s1, s2, s3, s2 * stride, s3 * stride),
    )
    return windows.reshape(n, c * k * k, out_h * out_w), (out_h, out_w)


def col2im(cols: np.ndarray, x_shape: tuple, k: int, stride: int,
           padding: int) -> np.ndarray:
    """Adjoint of im2col: scatter-add patch columns back onto (N,C,H,W)."""
    n, c, h, w = x_shape
    out_h = (h + 2 * padding - k) // stride + 1
    out_w = (w + 2 * padding - k) // stride + 1
    xp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=cols.dtype)
    cols6 = cols.reshape(n, c, k, k, out_h, out_w)
    for ki in range(k):
        for kj in range(k):
            xp[:, :, ki:ki + stride * out_h:stride,
               kj:kj + stride * out_w:stride] += cols6[:, :, ki, kj]
    if padding:
        return xp[:, :, padding:padding + h, padding:padding + w]
    return xp


def conv2d_forward(x, weight, bias, stride):
    """weight (Cout, Cin, k, k); output spatial dims = ceil(in/stride)."""
    cout, cin, k, _ = weight.shape
    if x.shape[1] != cin:
        raise ValueError(f"conv input has {x.shape[1]} channels, weight wants {cin}")
    cols, (out_h, out_w) = im2col(x, k, stride, k // 2)
    w_mat = weight.reshape(cout, cin * k * k)
    y = np.matmul(w_mat, cols) + bias[:, None]
    y = y.reshape(x.shape[0], cout, out_h, out_w)
    return y, (x.shape, cols, w_mat, weight.shape, stride)


def conv2d_backward(dy, cache):
    x_shape, cols, w_mat, w_shape, stride = cache
    n, cout = dy.shape[:2]
    k = w_shape[2]
    dy2 = dy.reshape(n, cout, -1)
    db = dy2.sum(axis=(0, 2))
    dw = np.matmul(dy2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w_shape)
    dcols = np.matmul(w_mat.T, dy2)
    dx = col2im(dcols, x_shape, k, stride, k // 2)
    return dx, dw, db


def conv_transpose2d_forward(x, weight, bias, stride):
    """weight (Cin, Cout, k, k); output spatial dims = stride * input dims."""
    cin, cout, k, _ = weight.shape
    if x.shape[1] != cin:
        raise ValueError(f"tconv input has {x.shape[1]} channels, weight wants {cin}")
    n, _, h, w = x.shape
    y_shape = (n, cout, stride * h, stride * w)
    x_flat = x.reshape(n, cin, h * w)
    w_mat = weight.reshape(cin, cout * k * k)
    cols = np.matmul(w_mat.T, x_flat)
    y = col2im(cols, y_shape, k, stride, k // 2)
    y += bias[None, :, None, None]
    return y, (x_flat, x.shape, w_mat, weight.shape, y_shape, stride)


def conv_transpose2d_backward(dy, cache):
    x_flat, x_shape, w_mat, w_shape, y_shape, stride = cache
    k = w_shape[2]
    dcols, _ = im2col(dy, k, stride, k // 2)
    db = dy.sum(axis=(0, 2, 3))
    dx = np.matmul(w_mat, dcols).reshape(x_shape)
    dw = np.matmul(x_flat, dcols.transpose(0, 2, 1)).sum(axis=0).reshape(w_shape)
    return dx, dw, db


def _affine_shape(x_ndim, gain):
    return (1, gain.shape[0]) + (1,) * (x_ndim - 2)


NORM_AXES = {"channel": (1,), "batch": (0, 2, 3), "instance": (2, 3)}


def norm_forward(x, gain, offset, kind, eps=1e-5):
    """Standardize over the axes the norm kind dictates, then per-channel affine.

    Statistics accumulate in 64-bit regardless of the input dtype.
    """
    axes = NORM_AXES[kind]
    mean = x.mean(axis=axes, keepdims=True, dtype=np.float64)
    var = np.square(x.astype(np.float64) - mean).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = ((x - mean) * inv).astype(x.dtype)
    shape = _affine_shape(x.ndim, gain)
    y = xhat * gain.reshape(shape) + offset.reshape(shape)
    m = 1
    for ax in axes:
        m *= x.shape[ax]
    return y, (xhat, inv.astype(x.dtype), gain, axes, m)


def norm_backward(dy, cache):
    xhat, inv, gain, axes, m = cache
    shape = _affine_shape(dy.ndim, gain)
    sum_axes = tuple(ax for ax in range(dy.ndim) if ax != 1)
    dgain = (dy * xhat).sum(axis=sum_axes)
    doffset = dy.sum(axis=sum_axes)
    dxhat = dy * gain.reshape(shape)
    s1 = dxhat.sum(axis=axes, keepdims=True)
    s2 = (dxhat * xhat).sum(axis=axes, keepdims=True)
    dx = (inv / m) * (m * dxhat - s1 - xhat * s2)
    return dx, dgain, doffset


def relu_forward(x):
    return np.maximum(x, 0), x > 0


def relu_backward(dy, mask):
    return dy * mask


def tanh_forward(x):
    y = np.tanh(x)
    return y, y


def tanh_backward(dy, y):
    return dy * (1.0 - y * y)


def upsample_nearest_forward(x, factor):
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor == 1:
        return x, (x.shape, factor)
    y = x.repeat(factor, axis=2).repeat(factor, axis=3)
    return y, (x.shape, factor)


def upsample_nearest_backward(dy, cache):
    (n, c, h, w), factor = cache
    if factor == 1:
        return dy
    return dy.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5))


def clamp_forward(x, lo, hi):
    return np.clip(x, lo, hi), (x > lo) & (x < hi)


def clamp_backward(dy, mask):
    return dy * mask


def he_uniform(rng: np.random.Generator, shape, fan_in, dtype=np.float32):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)
