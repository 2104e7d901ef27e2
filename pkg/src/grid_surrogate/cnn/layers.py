"""Batched 1D layer primitives with hand-written gradients.

All tensors are time-major per sample: (B, T, C).
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """(B, T, C) -> (B, T, k*C) zero-padded neighbourhoods, tap-major."""
    b, t, c = x.shape
    pad = k // 2
    xp = np.zeros((b, t + 2 * pad, c), dtype=x.dtype)
    xp[:, pad:pad + t] = x
    cols = np.empty((b, t, k, c), dtype=x.dtype)
    for j in range(k):
        cols[:, :, j, :] = xp[:, j:j + t, :]
    return cols.reshape(b, t, k * c)


def conv1d_forward(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray):
    """Same-padded cross-correlation plus bias: out[t] = sum_j x[t + j - K//2] @ w[j] + b.

    ``x`` is (T, C_in) or (B, T, C_in); ``kernels`` is (K, C_in, C_out).
    Returns the output and the column buffer needed by the backward pass.
    """
    single = x.ndim == 2
    if single:
        x = x[None]
    k, c_in, c_out = kernels.shape
    if k % 2 == 0:
        raise ContractError(f"same padding needs an odd kernel size, got {k}")
    if x.ndim != 3 or x.shape[2] != c_in or bias.shape != (c_out,):
        raise ContractError(f"conv input {x.shape} does not fit kernels {kernels.shape} / bias {bias.shape}")
    cols = _im2col(x, k)
    out = cols @ kernels.reshape(k * c_in, c_out) + bias
    return (out[0] if single else out), cols


def conv1d_backward(dout: np.ndarray, cols: np.ndarray, kernels: np.ndarray, need_input_grad: bool = True):
    """Gradients with respect to input (None if not requested), kernels and bias."""
    k, c_in, c_out = kernels.shape
    b, t, _ = dout.shape
    d2 = dout.reshape(-1, c_out)
    dw = (cols.reshape(-1, k * c_in).T @ d2).reshape(k, c_in, c_out)
    db = d2.sum(axis=0)
    if not need_input_grad:
        return None, dw, db
    dcols = (d2 @ kernels.reshape(k * c_in, c_out).T).reshape(b, t, k, c_in)
    pad = k // 2
    dxp = np.zeros((b, t + 2 * pad, c_in))
    for j in range(k):
        dxp[:, j:j + t, :] += dcols[:, :, j, :]
    return dxp[:, pad:pad + t], dw, db


def maxpool1d(x: np.ndarray):
    """Max over non-overlapping pairs along time; an odd trailing frame is dropped.

    Returns the pooled tensor and a mask of the winning positions.
    """
    single = x.ndim == 2
    if single:
        x = x[None]
    b, t, c = x.shape
    half = t // 2
    pairs = x[:, :2 * half].reshape(b, half, 2, c)
    # the first element wins ties, so the gradient goes to exactly one slot
    first = pairs[:, :, 0, :] >= pairs[:, :, 1, :]
    out = np.where(first, pairs[:, :, 0, :], pairs[:, :, 1, :])
    return (out[0] if single else out), first


def maxpool1d_backward(dout: np.ndarray, first: np.ndarray, t: int) -> np.ndarray:
    b, half, c = dout.shape
    pairs = np.empty((b, half, 2, c))
    pairs[:, :, 0, :] = np.where(first, dout, 0.0)
    pairs[:, :, 1, :] = np.where(first, 0.0, dout)
    dx = np.zeros((b, t, c))
    dx[:, :2 * half] = pairs.reshape(b, 2 * half, c)
    return dx


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    return x.mean(axis=-2)


def global_avg_pool_backward(dout: np.ndarray, t: int) -> np.ndarray:
    return np.repeat(dout[:, None, :] / t, t, axis=1)


def relu(x):
    return np.maximum(x, 0.0)
