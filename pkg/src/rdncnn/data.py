"""Image I/O, Gaussian noise injection and patch dataset streaming.

The only supported image format is binary PGM ("P5") with maxval 255.
Noise is added on the 0-255 scale; training tensors live in [0, 1].
"""

import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng


class PgmError(Exception):
    """Malformed PGM file; carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass
class Image:
    width: int
    height: int
    pixels: np.ndarray  # (height, width) uint8

    def __post_init__(self):
        if self.pixels.shape != (self.height, self.width):
            raise ValueError(f"pixel array shape {self.pixels.shape} != "
                             f"({self.height}, {self.width})")
        if self.pixels.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {self.pixels.dtype}")

    def normalized(self) -> np.ndarray:
        """Float32 copy scaled to [0, 1]."""
        return self.pixels.astype(np.float32) / np.float32(255.0)


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float  # standard deviation on the 0-255 scale
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")


def atomic_write_bytes(path, payload: bytes) -> None:
    """Write to a temp file in the target directory, then rename into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# PGM (P5) parsing
# ---------------------------------------------------------------------------

def _next_token(buf: bytes, pos: int):
    n = len(buf)
    while pos < n:
        ch = buf[pos:pos + 1]
        if ch == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    if pos >= n:
        raise PgmError("unexpected end of header", pos)
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace():
        pos += 1
    return buf[start:pos], pos


def load_image(path) -> Image:
    buf = Path(path).read_bytes()
    if buf[:2] != b"P5":
        raise PgmError(f"not a binary PGM (expected magic 'P5', got {buf[:2]!r})", 0)
    pos = 2
    fields = []
    for name in ("width", "height", "maxval"):
        token, pos = _next_token(buf, pos)
        try:
            value = int(token)
        except ValueError:
            raise PgmError(f"non-numeric {name} field {token!r}", pos - len(token))
        fields.append(value)
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise PgmError(f"invalid dimensions {width}x{height}", 2)
    if maxval != 255:
        raise PgmError(f"unsupported maxval {maxval} (only 255 is supported)", pos)
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise PgmError("missing whitespace after maxval", pos)
    pos += 1
    expected = width * height
    raster = buf[pos:pos + expected]
    if len(raster) < expected:
        raise PgmError(f"truncated raster: expected {expected} bytes, "
                       f"got {len(raster)}", pos + len(raster))
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()
    return Image(width=width, height=height, pixels=pixels)


def save_image(image: Image, path) -> None:
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + image.pixels.tobytes())


# ---------------------------------------------------------------------------
# noise
# ---------------------------------------------------------------------------

@dataclass
class NoisyImage:
    real: np.ndarray     # float32 (H, W), 0-255 scale, unclamped
    clamped: np.ndarray  # uint8 (H, W)


def add_awgn(image: Image, spec: NoiseSpec) -> NoisyImage:
    """Add i.i.d. zero-mean Gaussian noise of std sigma to every pixel."""
    gen = rng.stream(spec.seed, rng.PURPOSE_NOISE)
    noise = gen.standard_normal(image.pixels.shape) * spec.sigma
    real = (image.pixels.astype(np.float64) + noise).astype(np.float32)
    clamped = np.clip(np.rint(real), 0, 255).astype(np.uint8)
    return NoisyImage(real=real, clamped=clamped)


# ---------------------------------------------------------------------------
# patches and dataset streaming
# ---------------------------------------------------------------------------

def extract_patches(pixels: np.ndarray, patch_size: int, stride: int) -> np.ndarray:
    """All patch_size x patch_size windows on the stride grid, row-major.

    Returns an array of shape (count, 1, s, s) with the input dtype.
    """
    if pixels.ndim != 2:
        raise ValueError(f"expected a 2-D image array, got shape {pixels.shape}")
    h, w = pixels.shape
    s = patch_size
    if s < 1 or s > min(h, w):
        raise ValueError(f"patch size {s} does not fit a {h}x{w} image")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    rows = (h - s) // stride + 1
    cols = (w - s) // stride + 1
    out = np.empty((rows * cols, 1, s, s), dtype=pixels.dtype)
    idx = 0
    for r in range(rows):
        for c in range(cols):
            out[idx, 0] = pixels[r * stride:r * stride + s, c * stride:c * stride + s]
            idx += 1
    return out


class DatasetStream:
    """Deterministic epoch-indexed stream of shuffled (clean, noisy) batches.

    Noise is drawn fresh each epoch from a per-epoch derived seed; the
    shuffle order is likewise a deterministic function of (seed, epoch).
    """

    def __init__(self, clean_patches: np.ndarray, sigma: float, batch_size: int,
                 noise_seed: int, shuffle_seed: int):
        if clean_patches.ndim != 4 or clean_patches.shape[0] == 0:
            raise ValueError("clean_patches must be a non-empty (N,C,s,s) array")
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        if sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {sigma}")
        self.clean = np.ascontiguousarray(clean_patches, dtype=np.float32)
        self.sigma_norm = np.float32(sigma / 255.0)
        self.batch_size = batch_size
        self.noise_seed = noise_seed
        self.shuffle_seed = shuffle_seed

    @property
    def num_patches(self) -> int:
        return self.clean.shape[0]

    def num_batches(self) -> int:
        return math.ceil(self.num_patches / self.batch_size)

    def epoch_pairs(self, epoch: int):
        """Unshuffled (clean, noisy) arrays for one epoch's noise draw."""
        gen = rng.stream(self.noise_seed, rng.PURPOSE_NOISE, epoch)
        noise = gen.standard_normal(self.clean.shape).astype(np.float32) * self.sigma_norm
        return self.clean, self.clean + noise

    def batches(self, epoch: int):
        clean, noisy = self.epoch_pairs(epoch)
        order = rng.stream(self.shuffle_seed, rng.PURPOSE_SHUFFLE, epoch).permutation(
            self.num_patches)
        for start in range(0, self.num_patches, self.batch_size):
            idx = order[start:start + self.batch_size]
            yield clean[idx], noisy[idx]


def list_pgm_files(directory):
    return sorted(Path(directory).glob("*.pgm"))


def make_dataset(clean_dir, noise: NoiseSpec, patch_size: int, stride: int,
                 batch_size: int, shuffle_seed: int) -> DatasetStream:
    paths = list_pgm_files(clean_dir)
    if not paths:
        raise ValueError(f"no .pgm files found in {clean_dir}")
    patch_arrays = [extract_patches(load_image(p).normalized(), patch_size, stride)
                    for p in paths]
    clean = np.concatenate(patch_arrays, axis=0)
    return DatasetStream(clean, sigma=noise.sigma, batch_size=batch_size,
                         noise_seed=noise.seed, shuffle_seed=shuffle_seed)
