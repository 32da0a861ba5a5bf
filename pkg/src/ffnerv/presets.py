"""Named architecture presets.

``tiny`` is the desk-scale default (~55k parameters). ``paper-720p`` and
``paper-1080p`` reproduce the published layer layouts for the two
evaluation regimes; they are far too large to train here but their shape
arithmetic is exercised by the tests.
"""
from __future__ import annotations

import math

from .model import FFNeRVConfig


def tiny_config(num_frames: int, frame_hw: tuple[int, int] = (32, 32),
                **overrides) -> FFNeRVConfig:
    # two grids: a half-rate one and a full-rate one
    defaults = dict(
        num_frames=num_frames,
        frame_hw=frame_hw,
        upscale_factors=(2, 2, 2),
        block_widths=(24, 24, 16),
        grid_resolutions=(max(2, num_frames // 2), max(3, num_frames)),
        latent_channels=32,
        neighbors=(-2, -1, 1, 2),
        groups=4,
        compact_blocks=True,
    )
    defaults.update(overrides)
    return FFNeRVConfig(**defaults)


def paper_720p_config(num_frames: int = 600, **overrides) -> FFNeRVConfig:
    defaults = dict(
        num_frames=num_frames,
        frame_hw=(720, 1280),
        upscale_factors=(5, 2, 2, 2, 2),
        block_widths=(156, 96, 96, 96, 96),
        grid_resolutions=(64, 128, 256, 512),
        latent_channels=156,
        neighbors=(-2, -1, 1, 2),
        compact_blocks=False,  # NeRV blocks throughout in this regime
        flow_attach_stage=2,
    )
    defaults.update(overrides)
    return FFNeRVConfig(**defaults)


def paper_1080p_config(num_frames: int = 600,
                       level: tuple[int, int, int] = (64, 512, 32),
                       **overrides) -> FFNeRVConfig:
    c1, c2, smin = level
    widths = tuple(max(c2 // (2 ** i), smin) for i in range(5))
    defaults = dict(
        num_frames=num_frames,
        frame_hw=(1080, 1920),
        upscale_factors=(5, 3, 2, 2, 2),
        block_widths=widths,
        grid_resolutions=(num_frames // 2, num_frames),
        latent_channels=c1,
        neighbors=(-2, -1, 1, 2),
        groups=8,
        compact_blocks=True,
        flow_attach_stage=2,
    )
    defaults.update(overrides)
    return FFNeRVConfig(**defaults)


# Width/scale levels published for the compression regime, keyed by video
# length; each tuple is (C1, C2, S).
LEVELS_600 = [(24, 192, 16), (48, 392, 24), (64, 512, 32),
              (80, 640, 48), (96, 768, 48), (112, 896, 54)]
LEVELS_300 = [(16, 128, 16), (32, 256, 24), (48, 384, 32),
              (56, 448, 48), (64, 512, 48), (80, 640, 54)]

PRESETS = {
    "tiny": tiny_config,
    "paper-720p": paper_720p_config,
    "paper-1080p": paper_1080p_config,
}


def get_config(name: str, num_frames: int, frame_hw: tuple[int, int] | None = None,
               **overrides) -> FFNeRVConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    if name == "tiny":
        return tiny_config(num_frames, frame_hw or (32, 32), **overrides)
    cfg = PRESETS[name](num_frames=num_frames, **overrides)
    if frame_hw is not None and tuple(frame_hw) != cfg.frame_hw:
        raise ValueError(f"preset {name} expects frames of {cfg.frame_hw}, "
                         f"got {tuple(frame_hw)}")
    return cfg
