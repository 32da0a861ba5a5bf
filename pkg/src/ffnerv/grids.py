"""Learnable multi-resolution temporal grids.

A temporal grid is an (s, c, h, w) tensor indexed by a normalized time
coordinate; a bank holds several grids of increasing temporal resolution
whose sampled planes are concatenated along the channel axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .functional import grid_time_sample
from .tensor import Tensor, concat

GRID_INIT_SCALE = 1e-2


@dataclass
class TemporalGrid:
    values: Tensor  # (s, c, h, w)

    def __post_init__(self):
        if self.values.data.ndim != 4:
            raise ValueError(f"grid values must be (s,c,h,w), got {self.values.shape}")
        if min(self.values.shape) < 1:
            raise ValueError(f"grid extents must be >= 1, got {self.values.shape}")

    @property
    def resolution(self) -> int:
        return self.values.shape[0]

    @property
    def plane_shape(self) -> tuple[int, int, int]:
        return self.values.shape[1:]


def make_grid(rng: np.random.Generator, s: int, c: int, h: int, w: int,
              scale: float = GRID_INIT_SCALE) -> TemporalGrid:
    """Uniformly initialized grid in [-scale, scale]."""
    vals = rng.uniform(-scale, scale, size=(s, c, h, w)).astype(np.float32)
    return TemporalGrid(Tensor(vals, requires_grad=True))


def sample_grid(t: float, grid: TemporalGrid, total_frames: int) -> Tensor:
    """Time-interpolated (c,h,w) plane from one grid."""
    return grid_time_sample(grid.values, t, total_frames)


class GridBank:
    """Ordered grids of strictly increasing temporal resolution."""

    def __init__(self, grids: list[TemporalGrid], total_frames: int):
        if not grids:
            raise ValueError("grid bank must contain at least one grid")
        shapes = {g.plane_shape for g in grids}
        if len(shapes) > 1:
            raise ValueError(f"grids must share (c,h,w), got {sorted(shapes)}")
        res = [g.resolution for g in grids]
        if any(b <= a for a, b in zip(res, res[1:])):
            raise ValueError(f"temporal resolutions must be strictly increasing, got {res}")
        self.grids = list(grids)
        self.total_frames = total_frames

    @property
    def channels(self) -> int:
        return len(self.grids) * self.grids[0].plane_shape[0]

    @property
    def plane_hw(self) -> tuple[int, int]:
        return self.grids[0].plane_shape[1:]

    def sample(self, t: float) -> Tensor:
        """Concatenated (c*K, h, w) latent feature at time t."""
        planes = [sample_grid(t, g, self.total_frames) for g in self.grids]
        if len(planes) == 1:
            return planes[0]
        return concat(planes, axis=0)


def sample_bank(t: float, bank: GridBank) -> Tensor:
    return bank.sample(t)
