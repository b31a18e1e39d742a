"""Correlation metrics (SROCC/PLCC/KRCC/RMSE) and full-reference pixel
metrics (MSE/PSNR/SSIM) with standard tie handling.

All functions are pure and thread-safe. Ties use average ranks for
SROCC and the tau-b correction for KRCC. Pixel metrics operate in 8-bit
units with peak 255.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import correlate2d


class ConstantSeriesError(Exception):
    """Correlation is undefined for a constant series."""


def _as_pair(pred, target) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=float)
    t = np.asarray(target, dtype=float)
    if p.ndim != 1 or t.ndim != 1 or p.shape != t.shape:
        raise ValueError(f"need equal-length 1-D series, got {p.shape}, {t.shape}")
    if p.size < 2:
        raise ValueError("need at least 2 elements")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(t))):
        raise ValueError("series must be finite")
    return p, t


def average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the average of their positions."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def plcc(pred, target) -> float:
    """Pearson linear correlation coefficient."""
    p, t = _as_pair(pred, target)
    pc = p - p.mean()
    tc = t - t.mean()
    # multiply the square roots separately: the product of the squared
    # norms can underflow to 0 for tiny-magnitude series
    denom = math.sqrt(float(pc @ pc)) * math.sqrt(float(tc @ tc))
    if denom == 0.0:
        raise ConstantSeriesError("constant series in PLCC")
    return float(pc @ tc) / denom


def srocc(pred, target) -> float:
    """Spearman rank correlation: Pearson over average ranks."""
    p, t = _as_pair(pred, target)
    return plcc(average_ranks(p), average_ranks(t))


def krcc(pred, target) -> float:
    """Kendall tau-b rank correlation (tie-corrected)."""
    p, t = _as_pair(pred, target)
    dp = np.sign(p[:, None] - p[None, :])
    dt = np.sign(t[:, None] - t[None, :])
    iu = np.triu_indices(len(p), k=1)
    concordance = float((dp[iu] * dt[iu]).sum())
    n0 = len(iu[0])
    ties_p = n0 - int(np.count_nonzero(dp[iu]))
    ties_t = n0 - int(np.count_nonzero(dt[iu]))
    denom = math.sqrt((n0 - ties_p) * (n0 - ties_t))
    if denom == 0.0:
        raise ConstantSeriesError("all pairs tied in KRCC")
    return concordance / denom


def rmse(pred, target) -> float:
    p, t = _as_pair(pred, target)
    return float(np.sqrt(np.mean((p - t) ** 2)))


# -- pixel metrics -------------------------------------------------------

PEAK = 255.0

# Rec. 601 luma weights.
_LUMA = np.array([0.299, 0.587, 0.114])


def _as_pixels(img) -> np.ndarray:
    a = np.asarray(img, dtype=float)
    if a.ndim not in (2, 3):
        raise ValueError(f"expected 2-D or 3-D pixel array, got ndim={a.ndim}")
    return a


def mse_image(a, b) -> float:
    """Mean squared pixel difference in 8-bit units."""
    x, y = _as_pixels(a), _as_pixels(b)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return float(np.mean((x - y) ** 2))


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB; identical images give +inf."""
    m = mse_image(a, b)
    if m == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK**2 / m)


def _luma(img: np.ndarray) -> np.ndarray:
    if img.ndim == 3:
        if img.shape[2] == 1:
            return img[:, :, 0]
        return img[:, :, :3] @ _LUMA
    return img


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def ssim(a, b) -> float:
    """Mean local SSIM on luma: 11x11 Gaussian window (sigma 1.5),
    K1=0.01, K2=0.03, L=255, averaged over all full windows."""
    x, y = _as_pixels(a), _as_pixels(b)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    lx, ly = _luma(x), _luma(y)
    if min(lx.shape) < SSIM_WINDOW:
        raise ValueError(
            f"image smaller than {SSIM_WINDOW}x{SSIM_WINDOW} window: {lx.shape}"
        )
    w = gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (SSIM_K1 * PEAK) ** 2
    c2 = (SSIM_K2 * PEAK) ** 2

    def filt(z):
        return correlate2d(z, w, mode="valid")

    mu_x = filt(lx)
    mu_y = filt(ly)
    mu_xx = mu_x * mu_x
    mu_yy = mu_y * mu_y
    mu_xy = mu_x * mu_y
    var_x = filt(lx * lx) - mu_xx
    var_y = filt(ly * ly) - mu_yy
    cov = filt(lx * ly) - mu_xy
    num = (2 * mu_xy + c1) * (2 * cov + c2)
    den = (mu_xx + mu_yy + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def correlation_suite(pred, target) -> dict[str, float]:
    """The four evaluation metrics as one row."""
    return {
        "srocc": srocc(pred, target),
        "plcc": plcc(pred, target),
        "krcc": krcc(pred, target),
        "rmse": rmse(pred, target),
    }
