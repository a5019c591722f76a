"""Magnitude-based weight masking for the sparse training phase.

All conv kernel weights are ranked globally by absolute value and the
smallest floor(p * total) are frozen at zero. Biases and batch-norm
parameters are never masked. Ties at the percentile boundary break by
ascending (layer index, flat offset) so the mask is deterministic.
"""

import math
from dataclasses import dataclass

import numpy as np

from .network import Network
from .optim import AdamState


@dataclass
class Mask:
    """One binary map per conv kernel: 1 = trainable, 0 = frozen at zero."""
    maps: list
    sparsity: float

    @property
    def masked_count(self) -> int:
        return int(sum(int((m == 0).sum()) for m in self.maps))

    @property
    def total_weights(self) -> int:
        return int(sum(m.size for m in self.maps))


def compute_mask(net: Network, sparsity: float, scope: str = "global") -> Mask:
    """Rank kernel weights by magnitude and mark the smallest fraction.

    scope="global" ranks across all layers (the default); scope="per-layer"
    applies the fraction within each kernel tensor independently.
    """
    if not 0.0 <= sparsity < 1.0:
        raise ValueError(f"sparsity must be in [0, 1), got {sparsity}")
    if scope not in ("global", "per-layer"):
        raise ValueError(f"scope must be 'global' or 'per-layer', got {scope!r}")
    kernels = net.conv_kernels()
    maps = [np.ones(k.shape, dtype=np.uint8) for k in kernels]
    if scope == "per-layer":
        for k, m in zip(kernels, maps):
            n_mask = math.floor(sparsity * k.size)
            if n_mask:
                flat_order = _ranked_offsets(np.abs(k.ravel()))
                m.ravel()[flat_order[:n_mask]] = 0
        return Mask(maps=maps, sparsity=sparsity)

    mags = np.concatenate([np.abs(k.ravel()).astype(np.float64) for k in kernels])
    layers = np.concatenate([np.full(k.size, i, dtype=np.int64)
                             for i, k in enumerate(kernels)])
    offsets = np.concatenate([np.arange(k.size, dtype=np.int64) for k in kernels])
    n_mask = math.floor(sparsity * mags.size)
    if n_mask:
        # lexsort: last key is primary -> magnitude, then layer, then offset
        order = np.lexsort((offsets, layers, mags))
        for pos in order[:n_mask]:
            maps[layers[pos]].ravel()[offsets[pos]] = 0
    return Mask(maps=maps, sparsity=sparsity)


def _ranked_offsets(mags: np.ndarray) -> np.ndarray:
    offsets = np.arange(mags.size, dtype=np.int64)
    return np.lexsort((offsets, mags.astype(np.float64)))


def _kernel_param_slots(net: Network):
    """Indices of kernel tensors inside net.parameters() order."""
    slots = []
    idx = 0
    for block in net.blocks:
        slots.append(idx)
        idx += 2  # kernel, bias
        if block.use_bn:
            idx += 2  # gamma, beta
    return slots


def apply_mask(net: Network, mask: Mask, opt: AdamState | None = None) -> Network:
    """Zero the masked weights in place; also clear their optimizer moments."""
    if len(mask.maps) != len(net.blocks):
        raise ValueError(f"mask has {len(mask.maps)} maps for {len(net.blocks)} conv layers")
    for block, m in zip(net.blocks, mask.maps):
        if m.shape != block.kernel.shape:
            raise ValueError(f"mask shape {m.shape} != kernel shape {block.kernel.shape}")
        block.kernel[m == 0] = np.float32(0.0)
    if opt is not None:
        for slot, m in zip(_kernel_param_slots(net), mask.maps):
            opt.m[slot][m == 0] = 0.0
            opt.v[slot][m == 0] = 0.0
    return net
