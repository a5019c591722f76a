"""Forward and backward passes for the operator set the network needs.

Everything works on plain numpy arrays in NCHW layout. Training runs in
float32; the same code paths accept float64 so gradient checks can
recompute at higher precision. Convolutions use same-size zero padding.
"""

from dataclasses import dataclass

import numpy as np

from .kernels import (
    conv2d_forward_kernel,
    conv2d_grad_input_kernel,
    conv2d_grad_kernel_kernel,
)

BN_EPS = 1e-3
BN_MOMENTUM = 0.9


def _pad_same(x: np.ndarray, pad: int) -> np.ndarray:
    n, c, h, w = x.shape
    padded = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
    padded[:, :, pad:pad + h, pad:pad + w] = x
    return padded


def conv2d_forward(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-padded 2-D convolution, NCHW in, NFHW out."""
    if x.ndim != 4 or kernel.ndim != 4 or bias.ndim != 1:
        raise ValueError("conv2d expects 4-D input, 4-D kernel and 1-D bias")
    n, c, h, w = x.shape
    f, kc, ks, ks2 = kernel.shape
    if ks != ks2 or ks % 2 == 0:
        raise ValueError(f"kernel must be square with odd size, got {ks}x{ks2}")
    if kc != c:
        raise ValueError(f"input has {c} channels but kernel expects {kc}")
    if bias.shape[0] != f:
        raise ValueError(f"bias length {bias.shape[0]} != filter count {f}")
    if h < 1 or w < 1:
        raise ValueError("spatial dimensions must be >= 1")
    pad = (ks - 1) // 2
    padded = _pad_same(x, pad)
    out = np.empty((n, f, h, w), dtype=x.dtype)
    conv2d_forward_kernel(padded, kernel, bias, out)
    return out


def conv2d_backward(grad_out: np.ndarray, x: np.ndarray, kernel: np.ndarray):
    """Gradients of conv2d_forward w.r.t. input, kernel and bias."""
    n, c, h, w = x.shape
    f, kc, ks, _ = kernel.shape
    if kc != c:
        raise ValueError(f"input has {c} channels but kernel expects {kc}")
    if grad_out.shape != (n, f, h, w):
        raise ValueError(f"grad_out shape {grad_out.shape} != expected {(n, f, h, w)}")
    pad = (ks - 1) // 2
    padded = _pad_same(x, pad)
    grad_padded = np.zeros_like(padded)
    conv2d_grad_input_kernel(grad_out, kernel, grad_padded)
    grad_x = grad_padded[:, :, pad:pad + h, pad:pad + w].copy()
    grad_kernel = np.empty_like(kernel)
    conv2d_grad_kernel_kernel(padded, grad_out, grad_kernel)
    grad_bias = grad_out.sum(axis=(0, 2, 3))
    return grad_x, grad_kernel, grad_bias


@dataclass
class RunningStats:
    """Per-channel running mean/variance used by batch norm at inference."""
    mean: np.ndarray
    var: np.ndarray

    @classmethod
    def fresh(cls, channels: int, dtype=np.float32) -> "RunningStats":
        return cls(mean=np.zeros(channels, dtype=dtype),
                   var=np.ones(channels, dtype=dtype))


@dataclass
class BatchNormCache:
    x_hat: np.ndarray
    inv_std: np.ndarray
    gamma: np.ndarray


def batchnorm_forward(x, gamma, beta, stats: RunningStats, mode: str,
                      eps: float = BN_EPS, momentum: float = BN_MOMENTUM):
    """Per-channel batch norm. Returns (out, cache); cache is None in infer mode.

    Train mode normalizes by batch statistics over (N, H, W) and updates the
    running stats in place; infer mode uses the running stats.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    n, c, h, w = x.shape
    if mode == "train":
        count = n * h * w
        if count < 2:
            raise ValueError("batch norm train mode needs >= 2 elements per channel")
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        stats.mean = (momentum * stats.mean + (1.0 - momentum) * mean).astype(x.dtype)
        stats.var = (momentum * stats.var + (1.0 - momentum) * var).astype(x.dtype)
    else:
        mean = stats.mean
        var = stats.var
    inv_std = 1.0 / np.sqrt(var + x.dtype.type(eps))
    x_hat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma[None, :, None, None] * x_hat + beta[None, :, None, None]
    cache = BatchNormCache(x_hat=x_hat, inv_std=inv_std, gamma=gamma) if mode == "train" else None
    return out, cache


def batchnorm_backward(grad_out: np.ndarray, cache: BatchNormCache):
    """Backward through train-mode batch norm, including the batch-stat terms."""
    if cache is None:
        raise RuntimeError("batchnorm_backward called without a train-mode forward cache")
    x_hat, inv_std, gamma = cache.x_hat, cache.inv_std, cache.gamma
    if grad_out.shape != x_hat.shape:
        raise RuntimeError(f"grad_out shape {grad_out.shape} does not match cached "
                           f"forward shape {x_hat.shape}")
    n, c, h, w = grad_out.shape
    m = grad_out.dtype.type(n * h * w)
    grad_beta = grad_out.sum(axis=(0, 2, 3))
    grad_gamma = (grad_out * x_hat).sum(axis=(0, 2, 3))
    g = grad_out * gamma[None, :, None, None]
    g_sum = g.sum(axis=(0, 2, 3), keepdims=True)
    gx_sum = (g * x_hat).sum(axis=(0, 2, 3), keepdims=True)
    grad_x = (inv_std[None, :, None, None] / m) * (m * g - g_sum - x_hat * gx_sum)
    return grad_x, grad_gamma, grad_beta


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, x.dtype.type(0))


def relu_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    # derivative at exactly 0 is taken as 0
    return np.where(x > 0, grad_out, grad_out.dtype.type(0))


def residual_mse_loss(predicted_residual, noisy, clean):
    """Half mean squared error against the true residual (noisy - clean).

    Normalized by batch size only: loss = sum((pred - target)^2) / (2 B).
    Returns (loss, grad wrt predicted_residual).
    """
    if predicted_residual.shape != noisy.shape or noisy.shape != clean.shape:
        raise ValueError(f"shape mismatch: {predicted_residual.shape}, "
                         f"{noisy.shape}, {clean.shape}")
    batch = predicted_residual.shape[0]
    diff = predicted_residual - (noisy - clean)
    loss = float(np.sum(np.square(diff), dtype=np.float64) / (2.0 * batch))
    grad = diff / diff.dtype.type(batch)
    return loss, grad
