"""Synthetic test clips: (T, 3, H, W) float32 arrays in [0, 1]."""
from __future__ import annotations

import numpy as np


def _smooth_field(rows: int, cols: int, phase: float = 0.0) -> np.ndarray:
    y = np.linspace(0, 2 * np.pi, rows, endpoint=False)[:, None]
    x = np.linspace(0, 2 * np.pi, cols, endpoint=False)[None, :]
    r = 0.5 + 0.25 * np.sin(x + phase) + 0.25 * np.cos(0.5 * y - phase)
    g = 0.5 + 0.25 * np.cos(x * 0.75 + 0.3 + phase) + 0.25 * np.sin(y + 0.7)
    b = 0.5 + 0.25 * np.sin((x + y) * 0.5 + phase) + 0.25 * np.cos(y * 0.8)
    return np.stack([r, g, b]).astype(np.float32)


def gradient_clip(num_frames: int = 8, size: int = 32) -> np.ndarray:
    """Smooth color gradient translating 1 px/frame (window over a wide field)."""
    field = _smooth_field(size, size + num_frames + 4)
    frames = np.stack([field[:, :, t:t + size] for t in range(num_frames)])
    return np.ascontiguousarray(np.clip(frames, 0.0, 1.0))


def texture_clip(num_frames: int = 8, size: int = 32, seed: int = 7,
                 sigma: float = 1.0) -> np.ndarray:
    """Pure integer translation (1 px/frame) of a fixed random texture.

    The texture is band-limited (Gaussian-smoothed noise, full-contrast
    normalized): fine enough that temporal interpolation ghosts, coarse
    enough that a small decoder can represent single frames.
    """
    from scipy.ndimage import gaussian_filter

    rng = np.random.default_rng(seed)
    tex = rng.uniform(0.0, 1.0, size=(3, size, size + num_frames + 4))
    tex = gaussian_filter(tex, (0, sigma, sigma))
    tex = (tex - tex.min()) / (tex.max() - tex.min())
    frames = np.stack([tex[:, :, t:t + size] for t in range(num_frames)])
    return np.ascontiguousarray(frames.astype(np.float32))


def static_clip(num_frames: int = 8, size: int = 32) -> np.ndarray:
    """The same smooth frame repeated."""
    frame = np.clip(_smooth_field(size, size), 0.0, 1.0)
    return np.ascontiguousarray(np.repeat(frame[None], num_frames, axis=0))
