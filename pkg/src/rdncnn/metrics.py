"""PSNR and SSIM on grayscale images (0-255 scale)."""

import math

import numpy as np

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * 255.0) ** 2
SSIM_C2 = (0.03 * 255.0) ** 2


def psnr(reference: np.ndarray, test: np.ndarray, peak: float = 255.0) -> float:
    """10 log10(peak^2 / MSE); identical images return math.inf."""
    if reference.shape != test.shape:
        raise ValueError(f"shape mismatch: {reference.shape} vs {test.shape}")
    diff = reference.astype(np.float64) - test.astype(np.float64)
    mse = float(np.mean(np.square(diff)))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def format_db(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.2f}"


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma * sigma))
    window = np.outer(g, g)
    return window / window.sum()


def _windowed_mean(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    size = window.shape[0]
    views = np.lib.stride_tricks.sliding_window_view(img, (size, size))
    return np.tensordot(views, window, axes=([2, 3], [0, 1]))


def ssim(reference: np.ndarray, test: np.ndarray) -> float:
    """Mean structural similarity over all valid 11x11 Gaussian windows."""
    if reference.shape != test.shape:
        raise ValueError(f"shape mismatch: {reference.shape} vs {test.shape}")
    if min(reference.shape) < SSIM_WINDOW:
        raise ValueError(f"image {reference.shape} smaller than the "
                         f"{SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    x = reference.astype(np.float64)
    y = test.astype(np.float64)
    w = _gaussian_window()
    mu_x = _windowed_mean(x, w)
    mu_y = _windowed_mean(y, w)
    var_x = _windowed_mean(x * x, w) - mu_x * mu_x
    var_y = _windowed_mean(y * y, w) - mu_y * mu_y
    cov = _windowed_mean(x * y, w) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2)
    return float(np.mean(num / den))
