"""Tensor layer primitives (NHWC, float64) with explicit backward passes."""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    pass


def _im2col(x: np.ndarray, kh: int, kw: int, sh: int, sw: int) -> np.ndarray:
    n, h, w, c = x.shape
    ho = (h - kh) // sh + 1
    wo = (w - kw) // sw + 1
    cols = np.empty((n, ho, wo, kh, kw, c), dtype=x.dtype)
    for a in range(kh):
        for b in range(kw):
            cols[:, :, :, a, b, :] = x[:, a:a + sh * ho:sh, b:b + sw * wo:sw, :]
    return cols.reshape(n, ho, wo, kh * kw * c)


def conv_forward(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray,
                 stride: tuple[int, int] = (1, 1)):
    """Valid convolution. x: (N,H,W,C), kernels: (kh,kw,C,O), bias: (O,).

    Returns (out, cache); out[n,i,j,o] = sum x[n, i*sh+a, j*sw+b, c] * k[a,b,c,o] + bias[o].
    """
    if x.ndim != 4 or kernels.ndim != 4:
        raise ShapeError("conv expects 4-D input and kernels")
    kh, kw, cin, cout = kernels.shape
    if x.shape[3] != cin:
        raise ShapeError(f"channel mismatch: input {x.shape[3]}, kernel {cin}")
    sh, sw = stride
    if x.shape[1] < kh or x.shape[2] < kw:
        raise ShapeError("input smaller than kernel")
    cols = _im2col(x, kh, kw, sh, sw)
    out = cols @ kernels.reshape(-1, cout) + bias
    cache = (cols, x.shape, kernels.shape, stride)
    return out, cache


def conv_backward(dout: np.ndarray, kernels: np.ndarray, cache):
    cols, x_shape, k_shape, (sh, sw) = cache
    kh, kw, cin, cout = k_shape
    n, ho, wo, _ = dout.shape
    flat_cols = cols.reshape(-1, kh * kw * cin)
    flat_dout = dout.reshape(-1, cout)
    dk = (flat_cols.T @ flat_dout).reshape(k_shape)
    db = flat_dout.sum(axis=0)
    dcols = (flat_dout @ kernels.reshape(-1, cout).T).reshape(
        n, ho, wo, kh, kw, cin)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    for a in range(kh):
        for b in range(kw):
            dx[:, a:a + sh * ho:sh, b:b + sw * wo:sw, :] += dcols[:, :, :, a, b, :]
    return dx, dk, db


def maxpool_forward(x: np.ndarray):
    """Non-overlapping 2x2 max pooling; spatial dims must be even."""
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ShapeError("maxpool needs even spatial dimensions")
    blocks = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 2, 4, 5)
    flat = blocks.reshape(n, h // 2, w // 2, 4, c)
    arg = flat.argmax(axis=3)
    out = np.take_along_axis(flat, arg[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    cache = (arg, x.shape)
    return out, cache


def maxpool_backward(dout: np.ndarray, cache):
    arg, x_shape = cache
    n, h, w, c = x_shape
    dflat = np.zeros((n, h // 2, w // 2, 4, c), dtype=dout.dtype)
    np.put_along_axis(dflat, arg[:, :, :, None, :], dout[:, :, :, None, :], axis=3)
    blocks = dflat.reshape(n, h // 2, w // 2, 2, 2, c).transpose(0, 1, 3, 2, 4, 5)
    return blocks.reshape(x_shape)


def relu_forward(x: np.ndarray):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout: np.ndarray, mask: np.ndarray):
    return dout * mask


def fc_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"fc mismatch: input {x.shape[1]}, weights {w.shape[0]}")
    return x @ w + b, x


def fc_backward(dout: np.ndarray, w: np.ndarray, cache):
    x = cache
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch; returns (loss, dlogits)."""
    probs = softmax(logits)
    n = len(labels)
    loss = -np.mean(np.log(probs[np.arange(n), labels] + 1e-300))
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n
