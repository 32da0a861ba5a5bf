"""Full video representation model: grid bank -> conv blocks -> heads,
flow-guided aggregation of neighboring frames, and the training-time
frame buffer.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .functional import bilinear_upsample, bilinear_warp, softmax_channels
from .grids import GridBank, TemporalGrid, make_grid, GRID_INIT_SCALE
from .layers import ConvBlock, ConvBlockSpec, Head, HeadSpec
from .tensor import Tensor, concat, sigmoid


@dataclass
class FFNeRVConfig:
    """Architecture hyperparameters; serialized verbatim into the bitstream."""

    num_frames: int
    frame_hw: tuple[int, int]  # (rows, cols)
    upscale_factors: tuple[int, ...]
    block_widths: tuple[int, ...]  # out channels per block
    grid_resolutions: tuple[int, ...]
    latent_channels: int
    neighbors: tuple[int, ...] = (-2, -1, 1, 2)
    groups: int = 8
    compact_blocks: bool = True  # first block stays NeRV-style regardless
    kernel: int = 3
    flow_attach_stage: int | None = None  # default: 2 upscale stages below full res
    flow_enabled: bool = True
    grids_enabled: bool = True

    def __post_init__(self):
        self.frame_hw = tuple(self.frame_hw)
        self.upscale_factors = tuple(self.upscale_factors)
        self.block_widths = tuple(self.block_widths)
        self.grid_resolutions = tuple(self.grid_resolutions)
        self.neighbors = tuple(self.neighbors)
        if 0 in self.neighbors:
            raise ValueError("neighbor offsets must not contain 0")
        if len(self.block_widths) != len(self.upscale_factors):
            raise ValueError("block_widths and upscale_factors lengths differ")
        H, W = self.frame_hw
        up = math.prod(self.upscale_factors)
        if H % up or W % up:
            raise ValueError(
                f"frame size {H}x{W} not divisible by total upscale {up}")
        k = len(self.grid_resolutions) if self.grids_enabled else 1
        if self.latent_channels % k:
            raise ValueError(
                f"latent_channels={self.latent_channels} not divisible across "
                f"{k} grids")
        if self.flow_attach_stage is None:
            self.flow_attach_stage = max(0, len(self.upscale_factors) - 3)
        if not 0 <= self.flow_attach_stage < len(self.upscale_factors):
            raise ValueError(f"flow_attach_stage {self.flow_attach_stage} out of range")

    @property
    def grid_hw(self) -> tuple[int, int]:
        up = math.prod(self.upscale_factors)
        return self.frame_hw[0] // up, self.frame_hw[1] // up

    @property
    def effective_grid_resolutions(self) -> tuple[int, ...]:
        """Single full-length grid when multi-resolution grids are disabled."""
        if self.grids_enabled:
            return self.grid_resolutions
        return (self.num_frames,)

    def block_specs(self) -> list[ConvBlockSpec]:
        specs = []
        in_ch = self.latent_channels
        for i, (width, scale) in enumerate(zip(self.block_widths, self.upscale_factors)):
            kind = "compact" if (self.compact_blocks and i > 0) else "nerv"
            groups = self.groups if kind == "compact" else 1
            specs.append(ConvBlockSpec(kind=kind, in_ch=in_ch, out_ch=width,
                                       scale=scale, kernel=self.kernel,
                                       groups=groups))
            in_ch = width
        return specs

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FFNeRVConfig":
        return cls(**d)


def layer_shapes(config: FFNeRVConfig) -> list[tuple[str, tuple[int, int, int]]]:
    """Analytic output shape of every stage, grids through aggregation."""
    h, w = config.grid_hw
    shapes = [("grids", (config.latent_channels, h, w))]
    n = len(config.neighbors)
    for i, (width, scale) in enumerate(zip(config.block_widths, config.upscale_factors)):
        h, w = h * scale, w * scale
        shapes.append((f"block{i}", (width, h, w)))
        if i == config.flow_attach_stage and config.flow_enabled:
            shapes.append(("head_flow", (3 * n, h, w)))
    shapes.append(("head_color", (5, h, w)))
    shapes.append(("aggregation", (3, h, w)))
    return shapes


@dataclass
class FrameComponents:
    """Per-frame decoder outputs prior to aggregation."""

    independent: Tensor  # 3xHxW, sigmoid already applied
    agg_logit: Tensor  # 1xHxW weight logit for the aggregated frame
    ind_logit: Tensor  # 1xHxW weight logit for the independent frame
    flows: list[Tensor] = field(default_factory=list)  # 2xH'xW' per neighbor
    flow_logits: list[Tensor] = field(default_factory=list)  # 1xH'xW' per neighbor


class FrameBuffer:
    """Gradient-detached store of the T independent frames."""

    def __init__(self, num_frames: int, frame_hw: tuple[int, int]):
        H, W = frame_hw
        self.frames = np.zeros((num_frames, 3, H, W), dtype=np.float32)
        self.initialized = np.zeros(num_frames, dtype=bool)

    def __len__(self):
        return len(self.frames)

    def read(self, t: int) -> Tensor:
        if not self.initialized[t]:
            raise ValueError(f"frame buffer slot {t} read before initialization")
        return Tensor(self.frames[t])

    def write(self, t: int, frame: np.ndarray) -> None:
        if not 0 <= t < len(self.frames):
            raise IndexError(f"frame buffer index {t} out of range [0, {len(self.frames)})")
        self.frames[t] = frame
        self.initialized[t] = True


def update_buffer(indices, frames, buffer: FrameBuffer) -> None:
    """Overwrite exactly the given slots with detached frame values."""
    for t, frame in zip(indices, frames):
        if isinstance(frame, Tensor):
            if frame.requires_grad:
                raise ValueError("buffer frames must be detached from the graph")
            frame = frame.data
        buffer.write(int(t), np.asarray(frame, dtype=np.float32))


class FFNeRVModel:
    """f(t): time index -> frame, with flow-guided neighbor aggregation."""

    def __init__(self, config: FFNeRVConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        res = config.effective_grid_resolutions
        c_per = config.latent_channels // len(res)
        gh, gw = config.grid_hw
        self.bank = GridBank(
            [make_grid(rng, s, c_per, gh, gw, GRID_INIT_SCALE) for s in res],
            config.num_frames)
        self.blocks = [ConvBlock(spec, rng) for spec in config.block_specs()]
        n = len(config.neighbors)
        widths = config.block_widths
        self.flow_head = None
        if config.flow_enabled:
            self.flow_head = Head(HeadSpec(config.flow_attach_stage,
                                           widths[config.flow_attach_stage],
                                           3 * n), rng)
        self.color_head = Head(HeadSpec(len(widths) - 1, widths[-1], 5), rng)

    # -- parameters ----------------------------------------------------
    def parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for i, g in enumerate(self.bank.grids):
            params[f"grid{i}"] = g.values
        for i, blk in enumerate(self.blocks):
            for name, p in blk.params.items():
                params[f"block{i}/{name}"] = p
        if self.flow_head is not None:
            for name, p in self.flow_head.params.items():
                params[f"head_flow/{name}"] = p
        for name, p in self.color_head.params.items():
            params[f"head_color/{name}"] = p
        return params

    def weight_class_names(self) -> list[str]:
        """Parameters subject to QAT and symbol coding (grids + conv weights)."""
        return [name for name in self.parameters()
                if name.startswith("grid") or name.split("/")[-1] in ("w", "gw", "pw")]

    def conv_weight_names(self) -> list[str]:
        """Conv weights only (pruning scope; grids exempt)."""
        return [name for name in self.parameters()
                if name.split("/")[-1] in ("w", "gw", "pw")]

    def _p(self, pmap, name, default):
        if pmap is None:
            return default
        return pmap.get(name, default)

    # -- forward -------------------------------------------------------
    def _latent(self, t: float, pmap=None) -> Tensor:
        from .functional import grid_time_sample
        planes = [grid_time_sample(self._p(pmap, f"grid{i}", g.values), t,
                                   self.config.num_frames)
                  for i, g in enumerate(self.bank.grids)]
        return planes[0] if len(planes) == 1 else concat(planes, axis=0)

    def forward_components(self, t: float, pmap=None) -> FrameComponents:
        cfg = self.config
        if not 0 <= t < cfg.num_frames:
            raise ValueError(f"frame index {t} outside [0, {cfg.num_frames})")
        x = self._latent(t, pmap)
        flow_feat = None
        for i, blk in enumerate(self.blocks):
            bp = {k: self._p(pmap, f"block{i}/{k}", v) for k, v in blk.params.items()}
            x = blk.forward(x, bp)
            if i == cfg.flow_attach_stage:
                flow_feat = x
        cp = {k: self._p(pmap, f"head_color/{k}", v)
              for k, v in self.color_head.params.items()}
        color = self.color_head.forward(x, cp)
        comp = FrameComponents(
            independent=sigmoid(color[0:3]),
            agg_logit=color[3:4],
            ind_logit=color[4:5],
        )
        if self.flow_head is not None:
            fp = {k: self._p(pmap, f"head_flow/{k}", v)
                  for k, v in self.flow_head.params.items()}
            fh = self.flow_head.forward(flow_feat, fp)
            n = len(cfg.neighbors)
            comp.flows = [fh[2 * j:2 * j + 2] for j in range(n)]
            comp.flow_logits = [fh[2 * n + j:2 * n + j + 1] for j in range(n)]
        return comp

    def neighbor_indices(self, t: float) -> list[int]:
        """Clamped absolute neighbor indices for frame t (floor for fractional t)."""
        base = int(math.floor(t))
        last = self.config.num_frames - 1
        return [min(max(base + i, 0), last) for i in self.config.neighbors]

    def aggregation_detail(self, comp: FrameComponents, buffer: FrameBuffer,
                           t: float) -> tuple[list[Tensor], Tensor, Tensor]:
        """(warped neighbor frames, softmax weight maps, aggregated frame)."""
        if not comp.flows:
            raise ValueError("aggregate called on components without flow outputs")
        hw = self.config.frame_hw
        warped = []
        logits = []
        for j, flow, logit in zip(self.neighbor_indices(t), comp.flows,
                                  comp.flow_logits):
            up_flow = bilinear_upsample(flow, hw)
            logits.append(bilinear_upsample(logit, hw))
            warped.append(bilinear_warp(buffer.read(j), up_flow))
        weights = softmax_channels(concat(logits, axis=0))
        out = weights[0:1] * warped[0]
        for i in range(1, len(warped)):
            out = out + weights[i:i + 1] * warped[i]
        return warped, weights, out

    def aggregate(self, comp: FrameComponents, buffer: FrameBuffer,
                  t: float) -> Tensor:
        """Softmax-weighted sum of flow-warped neighbor frames at full resolution."""
        return self.aggregation_detail(comp, buffer, t)[2]

    def final_frame(self, comp: FrameComponents, aggregated: Tensor) -> Tensor:
        """Convex per-pixel blend of the aggregated and independent frames."""
        pair = softmax_channels(concat([comp.agg_logit, comp.ind_logit], axis=0))
        return pair[0:1] * aggregated + pair[1:2] * comp.independent

    # -- inference -----------------------------------------------------
    def independent_frame(self, t: float, pmap=None) -> np.ndarray:
        return self.forward_components(t, pmap).independent.data

    def decode_frame(self, t: float, buffer_mode: str = "live",
                     buffer: FrameBuffer | None = None, pmap=None,
                     cache: dict | None = None) -> np.ndarray:
        """Self-contained decode of frame t (live neighbor recomputation).

        ``buffer_mode="stored"`` reads neighbors from a caller-supplied
        buffer instead (test hook). ``cache`` optionally memoizes
        independent frames across decode calls.
        """
        cfg = self.config
        comp = self.forward_components(t, pmap)
        if not cfg.flow_enabled:
            return comp.independent.data
        if buffer_mode == "stored":
            if buffer is None:
                raise ValueError("stored buffer mode requires a buffer")
            buf = buffer
        elif buffer_mode == "live":
            buf = FrameBuffer(cfg.num_frames, cfg.frame_hw)
            for j in set(self.neighbor_indices(t)):
                if cache is not None and j in cache:
                    frame = cache[j]
                else:
                    frame = self.independent_frame(j, pmap)
                    if cache is not None:
                        cache[j] = frame
                buf.write(j, frame)
        else:
            raise ValueError(f"unknown buffer_mode {buffer_mode!r}")
        agg = self.aggregate(comp, buf, t)
        return self.final_frame(comp, agg).data
