"""Minimal conv-net layers with explicit reverse-mode derivatives.

Everything operates on (N, C, H, W) float arrays. Each forward returns
(output, cache); the matching backward consumes the cache and returns input
and parameter gradients. Convolutions are im2col + one GEMM per layer; the
transposed convolution reuses the same machinery with the roles of the
image-side scatter and gather swapped.

No autograd: the model wires these by hand, which keeps every gradient
checkable against finite differences.
"""

from __future__ import annotations

import numpy as np


def _im2col(x: np.ndarray, k: int, stride: int, pad: int):
    """Gather k x k patches into a (C*k*k, N*Ho*Wo) matrix."""
    n, c, h, w = x.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    sn, sc, sh, sw = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp, shape=(n, c, k, k, ho, wo),
        strides=(sn, sc, sh, sw, sh * stride, sw * stride), writeable=False)
    cols = windows.transpose(1, 2, 3, 0, 4, 5).reshape(c * k * k, n * ho * wo)
    return np.ascontiguousarray(cols), (ho, wo)


def _col2im(cols: np.ndarray, out_shape, k: int, stride: int, pad: int,
            grid) -> np.ndarray:
    """Scatter-add the transpose of :func:`_im2col`."""
    n, c, h, w = out_shape
    ho, wo = grid
    blocks = cols.reshape(c, k, k, n, ho, wo).transpose(3, 0, 1, 2, 4, 5)
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += blocks[:, :, i, j]
    return xp[:, :, pad:pad + h, pad:pad + w] if pad else xp


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1, pad: int = 1):
    """w: (C_out, C_in, k, k), b: (C_out,)."""
    c_out, c_in, k, _ = w.shape
    n = x.shape[0]
    cols, grid = _im2col(x, k, stride, pad)
    y = w.reshape(c_out, -1) @ cols + b[:, None]
    y = y.reshape(c_out, n, *grid).transpose(1, 0, 2, 3)
    return y, (x.shape, cols, w, stride, pad, grid)


def conv2d_backward(dy: np.ndarray, cache):
    x_shape, cols, w, stride, pad, grid = cache
    c_out, c_in, k, _ = w.shape
    n = dy.shape[0]
    dymat = dy.transpose(1, 0, 2, 3).reshape(c_out, -1)
    dw = (dymat @ cols.T).reshape(w.shape)
    db = dymat.sum(axis=1)
    dcols = w.reshape(c_out, -1).T @ dymat
    dx = _col2im(dcols, x_shape, k, stride, pad, grid)
    return dx, dw, db


def conv_transpose2d(x: np.ndarray, w: np.ndarray, b: np.ndarray,
                     stride: int = 2, pad: int = 1):
    """w: (C_in, C_out, k, k); output size (H-1)*stride - 2*pad + k."""
    c_in, c_out, k, _ = w.shape
    n, _, h, wdt = x.shape
    h_out = (h - 1) * stride - 2 * pad + k
    w_out = (wdt - 1) * stride - 2 * pad + k
    xmat = x.transpose(1, 0, 2, 3).reshape(c_in, -1)
    cols = w.reshape(c_in, -1).T @ xmat
    y = _col2im(cols, (n, c_out, h_out, w_out), k, stride, pad, (h, wdt))
    y += b[None, :, None, None]
    return y, (x.shape, xmat, w, stride, pad)


def conv_transpose2d_backward(dy: np.ndarray, cache):
    x_shape, xmat, w, stride, pad = cache
    c_in, c_out, k, _ = w.shape
    n, _, h, wdt = x_shape
    dycols, _ = _im2col(dy, k, stride, pad)          # (C_out*k*k, N*H*W)
    dxmat = w.reshape(c_in, -1) @ dycols
    dx = dxmat.reshape(c_in, n, h, wdt).transpose(1, 0, 2, 3)
    dw = (xmat @ dycols.T).reshape(w.shape)
    db = dy.sum(axis=(0, 2, 3))
    return dx, dw, db


def batchnorm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
              running_mean: np.ndarray, running_var: np.ndarray,
              train: bool, momentum: float = 0.1, eps: float = 1e-5):
    """Per-channel batchnorm over (N, H, W).

    Train mode normalizes with batch statistics and updates the running
    buffers in place (unbiased variance, like the usual convention); eval
    mode uses the running buffers and treats them as constants.
    """
    if train:
        m = x.shape[0] * x.shape[2] * x.shape[3]
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var * (m / max(m - 1, 1))
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    y = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    return y, (xhat, gamma, inv_std, train)


def batchnorm_backward(dy: np.ndarray, cache):
    xhat, gamma, inv_std, train = cache
    dgamma = (dy * xhat).sum(axis=(0, 2, 3))
    dbeta = dy.sum(axis=(0, 2, 3))
    dxhat = dy * gamma[None, :, None, None]
    if not train:
        dx = dxhat * inv_std[None, :, None, None]
        return dx, dgamma, dbeta
    m = dy.shape[0] * dy.shape[2] * dy.shape[3]
    # mean/variance are functions of the batch in train mode
    sum_dxhat = dxhat.sum(axis=(0, 2, 3))
    sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3))
    dx = (inv_std[None, :, None, None] / m) * (
        m * dxhat
        - sum_dxhat[None, :, None, None]
        - xhat * sum_dxhat_xhat[None, :, None, None])
    return dx, dgamma, dbeta


def relu(x: np.ndarray):
    y = np.maximum(x, 0.0)
    return y, (x > 0.0)


def relu_backward(dy: np.ndarray, cache):
    return dy * cache


def sigmoid(x: np.ndarray):
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    return y, y


def sigmoid_backward(dy: np.ndarray, cache):
    y = cache
    return dy * y * (1.0 - y)


#: Norm guard for normalize-on-use; gradients vanish below it.
NORMALIZE_EPS = 1e-8


def normalize_channels(x: np.ndarray):
    """Unit-normalize along the channel axis of (N, 3, H, W)."""
    norms = np.sqrt((x * x).sum(axis=1, keepdims=True))
    safe = np.maximum(norms, NORMALIZE_EPS)
    y = x / safe
    return y, (y, safe, norms > NORMALIZE_EPS)


def normalize_channels_backward(dy: np.ndarray, cache):
    y, safe, live = cache
    dot = (dy * y).sum(axis=1, keepdims=True)
    return np.where(live, (dy - dot * y) / safe, 0.0)


def global_avg_pool(x: np.ndarray):
    return x.mean(axis=(2, 3)), x.shape


def global_avg_pool_backward(dy: np.ndarray, shape):
    n, c, h, w = shape
    return np.broadcast_to(dy[:, :, None, None], shape) / (h * w)


def linear(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """x: (N, F_in), w: (F_out, F_in), b: (F_out,)."""
    return x @ w.T + b, (x, w)


def linear_backward(dy: np.ndarray, cache):
    x, w = cache
    return dy @ w, dy.T @ x, dy.sum(axis=0)


def he_init(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


def adam_update(param: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray,
                t: int, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                eps: float = 1e-8, weight_decay: float = 0.0) -> None:
    """One in-place Adam step; weight decay is added to the gradient."""
    if weight_decay:
        grad = grad + weight_decay * param
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)
