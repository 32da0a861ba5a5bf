"""Decoder building blocks: NeRV-style and compact conv blocks, head layers.

Both block kinds end in pixel-shuffle upscaling followed by GELU. The
compact kind replaces the single spatial conv with a grouped spatial conv
followed by a pointwise conv, cutting parameters by 1/g + C2'/(k^2*C1)
relative to the NeRV block (C2' = out_ch * scale^2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .functional import conv2d, pixel_shuffle
from .tensor import Tensor, gelu


@dataclass
class ConvBlockSpec:
    kind: str  # "nerv" | "compact"
    in_ch: int
    out_ch: int
    scale: int
    kernel: int = 3
    groups: int = 1

    def __post_init__(self):
        if self.kind not in ("nerv", "compact"):
            raise ValueError(f"unknown block kind {self.kind!r}")
        if self.scale < 1:
            raise ValueError(f"scale must be >= 1, got {self.scale}")
        if self.kind == "compact":
            c2p = self.out_ch * self.scale ** 2
            if self.in_ch % self.groups != 0:
                raise ValueError(
                    f"compact block: in_ch={self.in_ch} not divisible by "
                    f"groups={self.groups}")
            if c2p % self.groups != 0:
                raise ValueError(
                    f"compact block: out_ch*scale^2={c2p} not divisible by "
                    f"groups={self.groups}")

    @property
    def expanded_out(self) -> int:
        return self.out_ch * self.scale ** 2


@dataclass
class HeadSpec:
    attach_stage: int  # block index after which the head reads features
    in_ch: int
    out_ch: int
    kernel: int = 3


def _conv_init(rng: np.random.Generator, out_ch: int, in_per_group: int,
               k: int) -> tuple[Tensor, Tensor]:
    """Kaiming-uniform weight and zero bias."""
    fan_in = in_per_group * k * k
    bound = math.sqrt(1.0 / fan_in)
    w = rng.uniform(-bound, bound, size=(out_ch, in_per_group, k, k)).astype(np.float32)
    b = np.zeros(out_ch, dtype=np.float32)
    return Tensor(w, requires_grad=True), Tensor(b, requires_grad=True)


class ConvBlock:
    """Upscaling conv block; parameters are leaf tensors keyed by name."""

    def __init__(self, spec: ConvBlockSpec, rng: np.random.Generator):
        self.spec = spec
        self.params: dict[str, Tensor] = {}
        c2p = spec.expanded_out
        if spec.kind == "nerv":
            w, b = _conv_init(rng, c2p, spec.in_ch, spec.kernel)
            self.params["w"] = w
            self.params["b"] = b
        else:
            gw, gb = _conv_init(rng, c2p, spec.in_ch // spec.groups, spec.kernel)
            pw, pb = _conv_init(rng, c2p, c2p, 1)
            self.params.update(gw=gw, gb=gb, pw=pw, pb=pb)

    def forward(self, x: Tensor, params: dict[str, Tensor] | None = None) -> Tensor:
        p = params if params is not None else self.params
        spec = self.spec
        if spec.kind == "nerv":
            y = conv2d(x, p["w"], p["b"], groups=1, padding=spec.kernel // 2)
        else:
            y = conv2d(x, p["gw"], p["gb"], groups=spec.groups,
                       padding=spec.kernel // 2)
            y = conv2d(y, p["pw"], p["pb"], groups=1, padding=0)
        return gelu(pixel_shuffle(y, spec.scale))


class Head:
    """3x3 conv head emitting raw logits; nonlinearities live in the model."""

    def __init__(self, spec: HeadSpec, rng: np.random.Generator):
        self.spec = spec
        w, b = _conv_init(rng, spec.out_ch, spec.in_ch, spec.kernel)
        self.params = {"w": w, "b": b}

    def forward(self, x: Tensor, params: dict[str, Tensor] | None = None) -> Tensor:
        if x.shape[0] != self.spec.in_ch:
            raise ValueError(f"head expects {self.spec.in_ch} channels, got {x.shape[0]}")
        p = params if params is not None else self.params
        return conv2d(x, p["w"], p["b"], groups=1, padding=self.spec.kernel // 2)


def param_count(spec: ConvBlockSpec) -> tuple[int, int]:
    """(weight-only, weight+bias) learnable value counts for a block."""
    c2p = spec.expanded_out
    k = spec.kernel
    if spec.kind == "nerv":
        weights = spec.in_ch * c2p * k * k
        biases = c2p
    else:
        weights = spec.in_ch * c2p * k * k // spec.groups + c2p * c2p
        biases = 2 * c2p
    return weights, weights + biases


def compact_ratio(in_ch: int, expanded_out: int, groups: int, kernel: int) -> Fraction:
    """Exact compact/nerv weight-count ratio: 1/g + C2'/(k^2*C1)."""
    return Fraction(1, groups) + Fraction(expanded_out, kernel * kernel * in_ch)
