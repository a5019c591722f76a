"""Bit-exact binary checkpoint format for networks and masks.

Layout (all integers unsigned 32-bit little-endian):
  magic "RDNC", version, depth, filters, kernel size, input channels, flags;
  then per layer, per tensor in fixed order (kernel, bias, and for BN layers
  gamma, beta, running mean, running variance): rank, dims, raw float32 LE
  values; then, if flags bit 0 is set, one LSB-first bitmap per conv kernel
  (ceil(n/8) bytes). Flags bits 1-2 encode the training phase.
"""

import struct
from pathlib import Path

import numpy as np

from .data import atomic_write_bytes
from .masking import Mask
from .network import Network, NetworkConfig, build_network

MAGIC = b"RDNC"
VERSION = 1

FLAG_MASK_PRESENT = 0x1
_PHASE_SHIFT = 1
_PHASE_CODES = {"dense": 0, "sparse": 1, "retrained": 2}
_PHASE_NAMES = {v: k for k, v in _PHASE_CODES.items()}


class CheckpointError(Exception):
    """Malformed checkpoint; carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def _block_tensors(block):
    tensors = [block.kernel, block.bias]
    if block.use_bn:
        tensors += [block.gamma, block.beta, block.stats.mean, block.stats.var]
    return tensors


def serialize(net: Network, mask: Mask | None = None, phase: str = "dense") -> bytes:
    if phase not in _PHASE_CODES:
        raise ValueError(f"unknown phase {phase!r}")
    cfg = net.config
    flags = (FLAG_MASK_PRESENT if mask is not None else 0) | (
        _PHASE_CODES[phase] << _PHASE_SHIFT)
    parts = [MAGIC,
             struct.pack("<6I", VERSION, cfg.depth, cfg.filters, cfg.kernel_size,
                         cfg.input_channels, flags)]
    for block in net.blocks:
        for tensor in _block_tensors(block):
            parts.append(struct.pack("<I", tensor.ndim))
            parts.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            parts.append(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
    if mask is not None:
        if len(mask.maps) != len(net.blocks):
            raise ValueError("mask does not match the network")
        for m in mask.maps:
            parts.append(np.packbits(m.ravel().astype(np.uint8),
                                     bitorder="little").tobytes())
    return b"".join(parts)


def save_checkpoint(net: Network, mask: Mask | None, path, phase: str = "dense") -> None:
    atomic_write_bytes(path, serialize(net, mask, phase))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"truncated while reading {what}", len(self.buf))
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def deserialize(buf: bytes):
    """Returns (network, mask or None, phase name)."""
    r = _Reader(buf)
    if r.take(4, "magic") != MAGIC:
        raise CheckpointError(f"bad magic (expected {MAGIC!r})", 0)
    version = r.u32("version")
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version}", 4)
    depth = r.u32("depth")
    filters = r.u32("filters")
    kernel_size = r.u32("kernel size")
    channels = r.u32("input channels")
    flags = r.u32("flags")
    try:
        config = NetworkConfig(depth=depth, filters=filters, kernel_size=kernel_size,
                               input_channels=channels)
    except ValueError as exc:
        raise CheckpointError(f"invalid header: {exc}", 8) from exc
    phase = _PHASE_NAMES.get((flags >> _PHASE_SHIFT) & 0x3)
    if phase is None:
        raise CheckpointError(f"unknown phase code in flags {flags:#x}", 24)
    net = build_network(config, seed=0)
    for li, block in enumerate(net.blocks):
        for tensor in _block_tensors(block):
            start = r.pos
            rank = r.u32(f"layer {li} tensor rank")
            if rank != tensor.ndim:
                raise CheckpointError(
                    f"layer {li}: rank {rank} != expected {tensor.ndim}", start)
            dims = struct.unpack(f"<{rank}I", r.take(4 * rank, f"layer {li} dims"))
            if dims != tensor.shape:
                raise CheckpointError(
                    f"layer {li}: shape {dims} != expected {tensor.shape}", start)
            raw = r.take(4 * tensor.size, f"layer {li} tensor data")
            tensor[...] = np.frombuffer(raw, dtype="<f4").reshape(tensor.shape)
    mask = None
    if flags & FLAG_MASK_PRESENT:
        maps = []
        for li, block in enumerate(net.blocks):
            n = block.kernel.size
            raw = r.take((n + 7) // 8, f"layer {li} mask bitmap")
            bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8),
                                 count=n, bitorder="little")
            maps.append(bits.reshape(block.kernel.shape).astype(np.uint8))
        total = sum(m.size for m in maps)
        masked = sum(int((m == 0).sum()) for m in maps)
        mask = Mask(maps=maps, sparsity=masked / total if total else 0.0)
    if r.pos != len(buf):
        raise CheckpointError(f"{len(buf) - r.pos} trailing bytes", r.pos)
    return net, mask, phase


def load_checkpoint(path):
    return deserialize(Path(path).read_bytes())
