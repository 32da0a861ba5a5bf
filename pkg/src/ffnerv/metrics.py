"""Differentiable SSIM and scalar PSNR for frames in [0, 1]."""
from __future__ import annotations

import numpy as np

from .functional import conv2d
from .tensor import Tensor

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_C1 = (SSIM_K1 * 1.0) ** 2
SSIM_C2 = (SSIM_K2 * 1.0) ** 2

_window_cache: dict[tuple, Tensor] = {}


def gaussian_window(channels: int, dtype=np.float32) -> Tensor:
    """Normalized (C,1,11,11) Gaussian window for grouped blurring."""
    key = (channels, np.dtype(dtype).name)
    win = _window_cache.get(key)
    if win is None:
        ax = np.arange(SSIM_WINDOW, dtype=np.float64) - (SSIM_WINDOW - 1) / 2
        g = np.exp(-(ax ** 2) / (2 * SSIM_SIGMA ** 2))
        k2d = np.outer(g, g)
        k2d /= k2d.sum()
        arr = np.broadcast_to(k2d, (channels, 1, SSIM_WINDOW, SSIM_WINDOW)).copy()
        win = Tensor(arr, dtype=dtype)
        _window_cache[key] = win
    return win


def ssim(x: Tensor, y: Tensor) -> Tensor:
    """Mean SSIM over channels and valid 11x11 window positions (range 1.0)."""
    if x.shape != y.shape:
        raise ValueError(f"ssim shape mismatch: {x.shape} vs {y.shape}")
    C, H, W = x.shape
    if H < SSIM_WINDOW or W < SSIM_WINDOW:
        raise ValueError(f"frame {H}x{W} smaller than the {SSIM_WINDOW}x"
                         f"{SSIM_WINDOW} SSIM window")
    win = gaussian_window(C, x.dtype)

    def blur(z: Tensor) -> Tensor:
        return conv2d(z, win, None, groups=C, padding=0)

    mu_x = blur(x)
    mu_y = blur(y)
    mu_xx = mu_x * mu_x
    mu_yy = mu_y * mu_y
    mu_xy = mu_x * mu_y
    sig_xx = blur(x * x) - mu_xx
    sig_yy = blur(y * y) - mu_yy
    sig_xy = blur(x * y) - mu_xy
    num = (2.0 * mu_xy + SSIM_C1) * (2.0 * sig_xy + SSIM_C2)
    den = (mu_xx + mu_yy + SSIM_C1) * (sig_xx + sig_yy + SSIM_C2)
    return (num / den).mean()


def psnr(x: np.ndarray, y: np.ndarray) -> float:
    """10*log10(1/MSE) for [0,1] frames; identical inputs give +inf."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"psnr shape mismatch: {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(1.0 / mse)
