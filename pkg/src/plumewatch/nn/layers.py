"""Minimal convolutional layer ops with explicit forward caches and backward
passes. Everything is plain numpy over (N, C, H, W) arrays, stride 1 for
convolutions, so the analytic gradients can be checked against finite
differences to tight tolerance.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


# ---------------------------------------------------------------------------
# convolution (stride 1)


def _im2col(x: np.ndarray, kh: int, kw: int, pad: int) -> np.ndarray:
    """(N, C, H, W) -> (N, P, C*kh*kw) patch matrix, P = H_out*W_out."""
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(x, (kh, kw), axis=(2, 3))  # (N,C,Ho,Wo,kh,kw)
    n, c, ho, wo = windows.shape[:4]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n, ho * wo, c * kh * kw)
    return np.ascontiguousarray(cols), (ho, wo)


def _col2im(dcols: np.ndarray, x_shape, kh: int, kw: int, pad: int) -> np.ndarray:
    n, c, h, w = x_shape
    ho, wo = h + 2 * pad - kh + 1, w + 2 * pad - kw + 1
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=dcols.dtype)
    dc = dcols.reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + ho, j : j + wo] += dc[:, :, i, j]
    if pad:
        return dxp[:, :, pad:-pad, pad:-pad]
    return dxp


def conv2d_forward(x, w, b, pad):
    """w: (O, C, kh, kw), bias (O,). Returns (y, cache)."""
    o, c, kh, kw = w.shape
    cols, (ho, wo) = _im2col(x, kh, kw, pad)
    y = cols @ w.reshape(o, -1).T + b
    y = y.transpose(0, 2, 1).reshape(x.shape[0], o, ho, wo)
    return y, (cols, x.shape, w.shape, pad)


def conv2d_backward(dy, w, cache):
    cols, x_shape, w_shape, pad = cache
    o, c, kh, kw = w_shape
    n = dy.shape[0]
    dy_mat = dy.reshape(n, o, -1).transpose(0, 2, 1)  # (N, P, O)
    dw = np.tensordot(dy_mat, cols, axes=([0, 1], [0, 1])).reshape(w_shape)
    db = dy.sum(axis=(0, 2, 3))
    dcols = dy_mat @ w.reshape(o, -1)
    dx = _col2im(dcols, x_shape, kh, kw, pad)
    return dx, dw, db


# ---------------------------------------------------------------------------
# transposed convolution, kernel 2, stride 2 (non-overlapping upsample)


def convtranspose2x2_forward(x, w, b):
    """w: (C_in, C_out, 2, 2). Doubles the spatial dims."""
    n, c, h, wd = x.shape
    o = w.shape[1]
    y = np.einsum("ncij,coab->noiajb", x, w, optimize=True)
    y = y.reshape(n, o, 2 * h, 2 * wd) + b[None, :, None, None]
    return y, (x, w.shape)


def convtranspose2x2_backward(dy, w, cache):
    x, w_shape = cache
    n, c, h, wd = x.shape
    o = w_shape[1]
    dy_r = dy.reshape(n, o, h, 2, wd, 2).transpose(0, 1, 2, 4, 3, 5)  # (n,o,h,w,a,b)
    dx = np.einsum("nohwab,coab->nchw", dy_r, w, optimize=True)
    dw = np.einsum("nchw,nohwab->coab", x, dy_r, optimize=True)
    db = dy.sum(axis=(0, 2, 3))
    return dx, dw, db


# ---------------------------------------------------------------------------
# batch norm


def batchnorm_forward(x, gamma, beta, running_mean, running_var, mode,
                      eps=1e-5, momentum=0.1):
    """Returns (y, cache, new_running_mean, new_running_var).

    Train mode normalizes with batch statistics over (N, H, W) and updates
    the running estimates; eval mode uses the running estimates unchanged.
    """
    if mode == "train":
        mu = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (x - mu[None, :, None, None]) * inv_std[None, :, None, None]
        m = x.shape[0] * x.shape[2] * x.shape[3]
        unbiased = var * m / max(m - 1, 1)
        new_mean = (1 - momentum) * running_mean + momentum * mu
        new_var = (1 - momentum) * running_var + momentum * unbiased
        cache = (xhat, inv_std, gamma, "train")
    else:
        inv_std = 1.0 / np.sqrt(running_var + eps)
        xhat = (x - running_mean[None, :, None, None]) * inv_std[None, :, None, None]
        new_mean, new_var = running_mean, running_var
        cache = (xhat, inv_std, gamma, "eval")
    y = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    return y, cache, new_mean, new_var


def batchnorm_backward(dy, cache):
    xhat, inv_std, gamma, mode = cache
    dgamma = (dy * xhat).sum(axis=(0, 2, 3))
    dbeta = dy.sum(axis=(0, 2, 3))
    dxhat = dy * gamma[None, :, None, None]
    if mode == "eval":
        dx = dxhat * inv_std[None, :, None, None]
        return dx, dgamma, dbeta
    m = dy.shape[0] * dy.shape[2] * dy.shape[3]
    sum_dxhat = dxhat.sum(axis=(0, 2, 3))
    sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3))
    dx = (inv_std[None, :, None, None] / m) * (
        m * dxhat
        - sum_dxhat[None, :, None, None]
        - xhat * sum_dxhat_xhat[None, :, None, None]
    )
    return dx, dgamma, dbeta


# ---------------------------------------------------------------------------
# relu / max pool / concat


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dy, mask):
    return dy * mask


def maxpool2x2_forward(x):
    n, c, h, w = x.shape
    xr = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    xr = xr.reshape(n, c, h // 2, w // 2, 4)
    idx = xr.argmax(axis=-1)
    y = np.take_along_axis(xr, idx[..., None], axis=-1)[..., 0]
    return y, (idx, x.shape)


def maxpool2x2_backward(dy, cache):
    idx, x_shape = cache
    n, c, h, w = x_shape
    dxr = np.zeros((n, c, h // 2, w // 2, 4), dtype=dy.dtype)
    np.put_along_axis(dxr, idx[..., None], dy[..., None], axis=-1)
    dx = dxr.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return dx.reshape(n, c, h, w)


def concat_forward(a, b):
    return np.concatenate([a, b], axis=1), a.shape[1]


def concat_backward(dy, split):
    return dy[:, :split], dy[:, split:]


def sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out
