"""The residual denoising CNN: a stack of conv / batch-norm / ReLU blocks.

Layer pattern for depth D: conv+ReLU, then (D-2) x (conv+BN+ReLU), then a
final conv with no activation. The network predicts the noise residual;
denoising subtracts that prediction from the noisy input.
"""

import copy
from dataclasses import dataclass

import numpy as np

from . import ops, rng


@dataclass(frozen=True)
class NetworkConfig:
    depth: int
    filters: int
    kernel_size: int
    input_channels: int = 1

    def __post_init__(self):
        if self.depth < 3:
            raise ValueError(f"depth must be >= 3, got {self.depth}")
        if self.filters < 1:
            raise ValueError(f"filters must be >= 1, got {self.filters}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and >= 1, got {self.kernel_size}")
        if self.input_channels < 1:
            raise ValueError(f"input_channels must be >= 1, got {self.input_channels}")


class ConvBlock:
    """One conv layer with optional batch norm and ReLU."""

    def __init__(self, kernel, bias, use_bn, use_relu):
        self.kernel = kernel
        self.bias = bias
        self.use_bn = use_bn
        self.use_relu = use_relu
        dtype = kernel.dtype
        f = kernel.shape[0]
        if use_bn:
            self.gamma = np.ones(f, dtype=dtype)
            self.beta = np.zeros(f, dtype=dtype)
            self.stats = ops.RunningStats.fresh(f, dtype=dtype)
        else:
            self.gamma = None
            self.beta = None
            self.stats = None
        self.grad_kernel = np.zeros_like(kernel)
        self.grad_bias = np.zeros_like(bias)
        self.grad_gamma = np.zeros_like(self.gamma) if use_bn else None
        self.grad_beta = np.zeros_like(self.beta) if use_bn else None
        self._cache_x = None
        self._cache_bn = None
        self._cache_pre_relu = None

    def forward(self, x, mode):
        t = ops.conv2d_forward(x, self.kernel, self.bias)
        bn_cache = None
        if self.use_bn:
            t, bn_cache = ops.batchnorm_forward(t, self.gamma, self.beta, self.stats, mode)
        pre_relu = t
        if self.use_relu:
            t = ops.relu(t)
        if mode == "train":
            self._cache_x = x
            self._cache_bn = bn_cache
            self._cache_pre_relu = pre_relu if self.use_relu else None
        return t

    def backward(self, grad):
        if self._cache_x is None:
            raise RuntimeError("backward called without a cached train-mode forward")
        if self.use_relu:
            grad = ops.relu_backward(grad, self._cache_pre_relu)
        if self.use_bn:
            grad, self.grad_gamma, self.grad_beta = ops.batchnorm_backward(grad, self._cache_bn)
        grad, self.grad_kernel, self.grad_bias = ops.conv2d_backward(
            grad, self._cache_x, self.kernel)
        return grad

    def clear_cache(self):
        self._cache_x = None
        self._cache_bn = None
        self._cache_pre_relu = None


class Network:
    def __init__(self, config: NetworkConfig, blocks):
        self.config = config
        self.blocks = blocks

    def forward(self, x: np.ndarray, mode: str = "train") -> np.ndarray:
        if mode not in ("train", "infer"):
            raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
        if x.ndim != 4 or x.shape[1] != self.config.input_channels:
            raise ValueError(f"input shape {x.shape} does not match "
                             f"{self.config.input_channels} channels")
        if mode == "infer":
            for block in self.blocks:
                block.clear_cache()
        for block in self.blocks:
            x = block.forward(x, mode)
        return x

    def backward(self, grad_residual: np.ndarray) -> None:
        for block in reversed(self.blocks):
            grad_residual = block.backward(grad_residual)

    def denoise(self, noisy: np.ndarray) -> np.ndarray:
        """Subtract the predicted residual and clamp to the valid range."""
        residual = self.forward(noisy, mode="infer")
        return np.clip(noisy - residual, 0.0, 1.0)

    def count_parameters(self) -> int:
        total = 0
        for block in self.blocks:
            total += block.kernel.size + block.bias.size
            if block.use_bn:
                total += block.gamma.size + block.beta.size
        return total

    def parameters(self):
        """Trainable arrays in a fixed order (kernel, bias, [gamma, beta])."""
        params = []
        for block in self.blocks:
            params.append(block.kernel)
            params.append(block.bias)
            if block.use_bn:
                params.append(block.gamma)
                params.append(block.beta)
        return params

    def gradients(self):
        grads = []
        for block in self.blocks:
            grads.append(block.grad_kernel)
            grads.append(block.grad_bias)
            if block.use_bn:
                grads.append(block.grad_gamma)
                grads.append(block.grad_beta)
        return grads

    def conv_kernels(self):
        return [block.kernel for block in self.blocks]

    def clone(self) -> "Network":
        net = copy.deepcopy(self)
        for block in net.blocks:
            block.clear_cache()
        return net

    def astype(self, dtype) -> "Network":
        """Deep copy with all parameters and stats converted (for 64-bit checks)."""
        net = self.clone()
        for block in net.blocks:
            block.kernel = block.kernel.astype(dtype)
            block.bias = block.bias.astype(dtype)
            block.grad_kernel = np.zeros_like(block.kernel)
            block.grad_bias = np.zeros_like(block.bias)
            if block.use_bn:
                block.gamma = block.gamma.astype(dtype)
                block.beta = block.beta.astype(dtype)
                block.grad_gamma = np.zeros_like(block.gamma)
                block.grad_beta = np.zeros_like(block.beta)
                block.stats = ops.RunningStats(mean=block.stats.mean.astype(dtype),
                                               var=block.stats.var.astype(dtype))
        return net


def _layer_plan(config: NetworkConfig):
    c, f = config.input_channels, config.filters
    plan = [(c, f, False, True)]
    for _ in range(config.depth - 2):
        plan.append((f, f, True, True))
    plan.append((f, c, False, False))
    return plan


def build_network(config: NetworkConfig, seed: int) -> Network:
    """Deterministic He-initialized network: kernel std sqrt(2 / (k^2 fan_in))."""
    gen = rng.stream(seed, rng.PURPOSE_INIT)
    k = config.kernel_size
    blocks = []
    for in_c, out_c, use_bn, use_relu in _layer_plan(config):
        std = np.sqrt(2.0 / (k * k * in_c))
        kernel = (gen.standard_normal((out_c, in_c, k, k)) * std).astype(np.float32)
        bias = np.zeros(out_c, dtype=np.float32)
        blocks.append(ConvBlock(kernel, bias, use_bn, use_relu))
    return Network(config, blocks)
