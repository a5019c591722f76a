import numpy as np
import pytest

from rdncnn import backend
from rdncnn.data import Image


@pytest.fixture(autouse=True)
def restore_backend():
    saved = backend.current_backend()
    yield
    backend.set_backend(saved)


def synth_patches(n: int, size: int, seed: int, coarse: int = 5) -> np.ndarray:
    """Piecewise-smooth synthetic clean patches in [0,1], shape (n, 1, s, s).

    Bilinear upsampling of coarse random grids: smooth enough that a small
    denoiser can learn something in a handful of epochs.
    """
    gen = np.random.default_rng(seed)
    grids = gen.uniform(0.0, 1.0, (n, coarse, coarse))
    xs = np.linspace(0, coarse - 1, size)
    i0 = np.clip(xs.astype(int), 0, coarse - 2)
    fr = xs - i0
    rows = (grids[:, i0, :] * (1 - fr)[None, :, None]
            + grids[:, i0 + 1, :] * fr[None, :, None])
    out = (rows[:, :, i0] * (1 - fr)[None, None, :]
           + rows[:, :, i0 + 1] * fr[None, None, :])
    return out[:, None].astype(np.float32)


def random_image(height: int, width: int, seed: int) -> Image:
    gen = np.random.default_rng(seed)
    pixels = gen.integers(0, 256, (height, width), dtype=np.uint8)
    return Image(width=width, height=height, pixels=pixels)
