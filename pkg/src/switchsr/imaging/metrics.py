"""PSNR, SSIM and histogram entropy on normalized images."""

import csv
import math
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .patches import ImagePatch, to_bytes

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
K1, K2 = 0.01, 0.03
BT601 = np.array([0.299, 0.587, 0.114])


def _pixels(x):
    return np.asarray(x.pixels if isinstance(x, ImagePatch) else x, dtype=np.float64)


def luma(x):
    """BT.601 luma of a ``(C, H, W)`` image; single-channel input is returned as is."""
    p = _pixels(x)
    if p.ndim == 2:
        return p
    if p.shape[0] == 1:
        return p[0]
    if p.shape[0] == 3:
        return np.tensordot(BT601, p, axes=1)
    raise ValueError(f"expected 1 or 3 channels, got {p.shape[0]}")


def psnr(x, y):
    """PSNR in dB with peak 1.0; identical inputs give ``math.inf``."""
    a, b = _pixels(x), _pixels(y)
    if a.shape != b.shape:
        raise ValueError(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


@lru_cache(maxsize=4)
def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    t = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(t * t) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img, g):
    k = g.size
    rows = sliding_window_view(img, k, axis=0) @ g
    return sliding_window_view(rows, k, axis=1) @ g


def ssim_map(x, y):
    a, b = luma(x), luma(y)
    if a.shape != b.shape:
        raise ValueError(f"ssim shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"ssim needs images at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape}")
    g = gaussian_window()
    c1, c2 = K1 ** 2, K2 ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a * mu_a
    var_b = _filter_valid(b * b, g) - mu_b * mu_b
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(x, y):
    """Mean SSIM over all valid 11x11 Gaussian windows of the luma channel."""
    return float(np.mean(ssim_map(x, y)))


def entropy(x):
    """Shannon entropy (bits) of the 256-bin histogram of 8-bit luma."""
    q = to_bytes(luma(x))
    counts = np.bincount(q.ravel(), minlength=256)
    p = counts[counts > 0] / q.size
    return float(max(0.0, -np.sum(p * np.log2(p))))


def write_metrics_csv(path, rows):
    """``rows`` are ``(patch_id, psnr_db, ssim, entropy_bits)`` tuples."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patch_id", "psnr_db", "ssim", "entropy_bits"])
        for pid, p, s, e in rows:
            w.writerow([pid, f"{p:.9g}", f"{s:.9g}", f"{e:.9g}"])
