"""Differentiable structured ops on CxHxW tensors.

Conventions fixed here (and echoed in the bitstream format notes):
  * conv2d is cross-correlation, stride 1, zero padding.
  * pixel_shuffle: out[c, h*S+dy, w*S+dx] = in[c*S*S + dy*S + dx, h, w].
  * bilinear_warp samples ``frame`` at (x + flow[0], y + flow[1]) with
    border clamping; flow channel 0 is horizontal, channel 1 vertical,
    both in output-resolution pixel units.
  * bilinear_upsample uses align-corners-false coordinates.
"""
from __future__ import annotations

import numpy as np

from . import kernels
from .tensor import Tensor, _result


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None, groups: int = 1,
           padding: int | None = None) -> Tensor:
    """2-D convolution of a CxHxW tensor; padding defaults to k//2."""
    if x.data.ndim != 3:
        raise ValueError(f"conv2d input must be CxHxW, got shape {x.shape}")
    if weight.data.ndim != 4:
        raise ValueError(f"conv2d weight must be OxCgxkxk, got shape {weight.shape}")
    C = x.shape[0]
    O, Cg, k, k2 = weight.shape
    if k != k2:
        raise ValueError(f"conv2d kernel must be square, got {k}x{k2}")
    if groups < 1:
        raise ValueError(f"groups must be positive, got {groups}")
    if C % groups != 0:
        raise ValueError(f"input channels C={C} not divisible by groups={groups}")
    if O % groups != 0:
        raise ValueError(f"output channels O={O} not divisible by groups={groups}")
    if Cg != C // groups:
        raise ValueError(
            f"weight expects {Cg} channels per group, input provides {C // groups}")
    if bias is not None and bias.shape != (O,):
        raise ValueError(f"bias shape {bias.shape} != ({O},)")
    if weight.dtype != x.dtype or (bias is not None and bias.dtype != x.dtype):
        raise ValueError(
            f"conv2d dtype mismatch: input {x.dtype}, weight {weight.dtype}"
            + (f", bias {bias.dtype}" if bias is not None else ""))
    if padding is None:
        padding = k // 2
    if x.shape[1] + 2 * padding < k or x.shape[2] + 2 * padding < k:
        raise ValueError(f"spatial extent {x.shape[1:]} too small for kernel {k} "
                         f"with padding {padding}")

    data = kernels.conv2d_forward(x.data, weight.data,
                                  bias.data if bias is not None else None,
                                  groups, padding)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def back(g):
        gx, gw, gb = kernels.conv2d_backward(
            x.data, weight.data, groups, padding, g,
            x.requires_grad, weight.requires_grad)
        if bias is None:
            return gx, gw
        return gx, gw, gb

    return _result(data, parents, back, "conv2d")


def pixel_shuffle(x: Tensor, scale: int) -> Tensor:
    """Rearrange (C*S*S)xHxW into Cx(S*H)x(S*W) sub-pixel layout."""
    if scale < 1:
        raise ValueError(f"scale must be positive, got {scale}")
    C2, H, W = x.shape
    s2 = scale * scale
    if C2 % s2 != 0:
        raise ValueError(f"channels {C2} not divisible by scale^2={s2}")
    C = C2 // s2
    data = (x.data.reshape(C, scale, scale, H, W)
            .transpose(0, 3, 1, 4, 2)
            .reshape(C, H * scale, W * scale))

    def back(g):
        gx = (g.reshape(C, H, scale, W, scale)
              .transpose(0, 2, 4, 1, 3)
              .reshape(C2, H, W))
        return (np.ascontiguousarray(gx),)

    return _result(np.ascontiguousarray(data), (x,), back, "pixel_shuffle")


def bilinear_warp(frame: Tensor, flow: Tensor) -> Tensor:
    """Backward-warp ``frame`` by a 2xHxW displacement field."""
    if flow.shape[0] != 2 or flow.shape[1:] != frame.shape[1:]:
        raise ValueError(f"flow shape {flow.shape} incompatible with frame "
                         f"{frame.shape}")
    if flow.dtype != frame.dtype:
        raise ValueError(f"bilinear_warp dtype mismatch: frame {frame.dtype}, "
                         f"flow {flow.dtype}")
    data = kernels.warp_forward(frame.data, flow.data)

    def back(g):
        return kernels.warp_backward(frame.data, flow.data, g,
                                     frame.requires_grad, flow.requires_grad)

    return _result(data, (frame, flow), back, "bilinear_warp")


def bilinear_upsample(x: Tensor, target: tuple[int, int]) -> Tensor:
    """Upscale CxhxW to the target (H, W), align-corners-false."""
    H, W = target
    _, h, w = x.shape
    if H < h or W < w:
        raise ValueError(f"bilinear_upsample cannot downscale {h}x{w} -> {H}x{W}")
    if (H, W) == (h, w):
        data = x.data.copy()

        def back_id(g):
            return (g,)

        return _result(data, (x,), back_id, "bilinear_upsample")
    data = kernels.upsample_forward(x.data, H, W)

    def back(g):
        return (kernels.upsample_backward(x.shape, H, W, g),)

    return _result(data, (x,), back, "bilinear_upsample")


def softmax_channels(x: Tensor) -> Tensor:
    """Per-pixel softmax across the channel axis (max-subtracted)."""
    z = x.data - x.data.max(axis=0, keepdims=True)
    e = np.exp(z)
    data = (e / e.sum(axis=0, keepdims=True)).astype(x.dtype, copy=False)

    def back(g):
        dot = (g * data).sum(axis=0, keepdims=True)
        return ((data * (g - dot)).astype(x.dtype, copy=False),)

    return _result(data, (x,), back, "softmax_channels")


def grid_time_sample(values: Tensor, t: float, total_frames: int) -> Tensor:
    """Linear interpolation along axis 0 of an (s,c,h,w) grid at time t.

    The temporal coordinate is normalized as t*s/T; the upper index is
    clamped to s-1 and integer coordinates return the entry bit-exactly.
    Gradients flow only into the one or two referenced entries.
    """
    s = values.shape[0]
    if not 0 <= t < total_frames:
        raise ValueError(f"frame index {t} outside [0, {total_frames})")
    that = t * s / total_frames
    m = int(np.floor(that))
    n = min(int(np.ceil(that)), s - 1)
    if m == n:
        data = values.data[m].copy()

        def back_one(g):
            gv = np.zeros_like(values.data)
            gv[m] = g
            return (gv,)

        return _result(data, (values,), back_one, "grid_time_sample")
    a = values.dtype.type(n - that)
    b = values.dtype.type(that - m)
    data = a * values.data[m] + b * values.data[n]

    def back(g):
        gv = np.zeros_like(values.data)
        gv[m] = a * g
        gv[n] = b * g
        return (gv,)

    return _result(data, (values,), back, "grid_time_sample")


def qat_quantize(w: Tensor, bits: int) -> Tensor:
    """Symmetric tanh quantizer with a straight-through backward pass.

    Forward: sign(w) * floor(N * tanh|w|) / N with N = 2**(bits-1) - 1.
    The doubled interval |w| < atanh(1/N) maps to zero.
    """
    if bits < 2:
        raise ValueError(f"bit width must be >= 2, got {bits}")
    N = (1 << (bits - 1)) - 1
    data = (np.sign(w.data)
            * np.floor(N * np.tanh(np.abs(w.data))) / N).astype(w.dtype, copy=False)

    def back(g):
        return (g,)

    return _result(data, (w,), back, "qat_quantize")
