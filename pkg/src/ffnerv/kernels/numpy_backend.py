"""Pure-numpy kernels for the hot ops: conv2d, bilinear warp, bilinear upsample.

Convolution uses im2col + BLAS matmul; warp and upsample are vectorized
gather/scatter. All functions are deterministic and dtype-preserving
(float32 or float64).
"""
from __future__ import annotations

import numpy as np

NAME = "numpy"


def _im2col(xp: np.ndarray, k: int) -> np.ndarray:
    """(C, Hp, Wp) -> (C, k, k, Ho, Wo) view of sliding kxk windows."""
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    # win: (C, Ho, Wo, k, k) -> (C, k, k, Ho, Wo)
    return win.transpose(0, 3, 4, 1, 2)


def conv2d_forward(x, w, b, groups: int, padding: int):
    C, H, W = x.shape
    O, Cg, k, _ = w.shape
    Og = O // groups
    if padding:
        xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x
    Ho = H + 2 * padding - k + 1
    Wo = W + 2 * padding - k + 1
    cols = _im2col(xp, k)  # (C, k, k, Ho, Wo)
    out = np.empty((O, Ho, Wo), dtype=x.dtype)
    for g in range(groups):
        cmat = np.ascontiguousarray(
            cols[g * Cg:(g + 1) * Cg]).reshape(Cg * k * k, Ho * Wo)
        wmat = w[g * Og:(g + 1) * Og].reshape(Og, Cg * k * k)
        out[g * Og:(g + 1) * Og] = (wmat @ cmat).reshape(Og, Ho, Wo)
    if b is not None:
        out += b[:, None, None]
    return out


def conv2d_backward(x, w, groups: int, padding: int, gout,
                    need_input: bool, need_weight: bool):
    C, H, W = x.shape
    O, Cg, k, _ = w.shape
    Og = O // groups
    Ho, Wo = gout.shape[1:]
    gb = gout.sum(axis=(1, 2))
    gx = np.zeros((C, H + 2 * padding, W + 2 * padding), dtype=x.dtype) if need_input else None
    gw = np.empty_like(w) if need_weight else None
    if need_input or need_weight:
        if padding:
            xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
        else:
            xp = x
        cols = _im2col(xp, k)
        for g in range(groups):
            gmat = gout[g * Og:(g + 1) * Og].reshape(Og, Ho * Wo)
            if need_weight:
                cmat = np.ascontiguousarray(
                    cols[g * Cg:(g + 1) * Cg]).reshape(Cg * k * k, Ho * Wo)
                gw[g * Og:(g + 1) * Og] = (gmat @ cmat.T).reshape(Og, Cg, k, k)
            if need_input:
                wmat = w[g * Og:(g + 1) * Og].reshape(Og, Cg * k * k)
                gcol = (wmat.T @ gmat).reshape(Cg, k, k, Ho, Wo)
                gxg = gx[g * Cg:(g + 1) * Cg]
                for dy in range(k):
                    for dx in range(k):
                        gxg[:, dy:dy + Ho, dx:dx + Wo] += gcol[:, dy, dx]
        if need_input and padding:
            gx = np.ascontiguousarray(gx[:, padding:-padding, padding:-padding])
    return gx, gw, gb


def _warp_coords(frame_shape, flow):
    _, H, W = frame_shape
    xs_raw = np.arange(W, dtype=flow.dtype)[None, :] + flow[0]
    ys_raw = np.arange(H, dtype=flow.dtype)[:, None] + flow[1]
    xs = np.clip(xs_raw, 0, W - 1)
    ys = np.clip(ys_raw, 0, H - 1)
    x0 = np.minimum(np.floor(xs), max(W - 2, 0)).astype(np.intp)
    y0 = np.minimum(np.floor(ys), max(H - 2, 0)).astype(np.intp)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    wx = xs - x0
    wy = ys - y0
    return xs_raw, ys_raw, x0, x1, y0, y1, wx, wy


def warp_forward(frame, flow):
    xs_raw, ys_raw, x0, x1, y0, y1, wx, wy = _warp_coords(frame.shape, flow)
    f00 = frame[:, y0, x0]
    f01 = frame[:, y0, x1]
    f10 = frame[:, y1, x0]
    f11 = frame[:, y1, x1]
    one = frame.dtype.type(1)
    return ((one - wy) * ((one - wx) * f00 + wx * f01)
            + wy * ((one - wx) * f10 + wx * f11)).astype(frame.dtype, copy=False)


def warp_backward(frame, flow, gout, need_frame: bool, need_flow: bool):
    C, H, W = frame.shape
    xs_raw, ys_raw, x0, x1, y0, y1, wx, wy = _warp_coords(frame.shape, flow)
    one = frame.dtype.type(1)
    gframe = None
    if need_frame:
        gframe = np.zeros((C, H * W), dtype=frame.dtype)
        ch = np.arange(C)[:, None]
        g2 = gout.reshape(C, -1)
        for yy, xx, wgt in (
            (y0, x0, (one - wy) * (one - wx)),
            (y0, x1, (one - wy) * wx),
            (y1, x0, wy * (one - wx)),
            (y1, x1, wy * wx),
        ):
            np.add.at(gframe, (ch, (yy * W + xx).ravel()[None, :]),
                      g2 * wgt.ravel()[None, :])
        gframe = gframe.reshape(C, H, W)
    gflow = None
    if need_flow:
        f00 = frame[:, y0, x0]
        f01 = frame[:, y0, x1]
        f10 = frame[:, y1, x0]
        f11 = frame[:, y1, x1]
        # derivative w.r.t. the sample coordinate; zero where the clamp binds
        dx = (one - wy) * (f01 - f00) + wy * (f11 - f10)
        dy = (one - wx) * (f10 - f00) + wx * (f11 - f01)
        mask_x = ((xs_raw > 0) & (xs_raw < W - 1)).astype(frame.dtype)
        mask_y = ((ys_raw > 0) & (ys_raw < H - 1)).astype(frame.dtype)
        gflow = np.stack([
            (gout * dx).sum(axis=0) * mask_x,
            (gout * dy).sum(axis=0) * mask_y,
        ]).astype(frame.dtype, copy=False)
    return gframe, gflow


def _upsample_axis(n_src: int, n_dst: int, dtype):
    scale = n_src / n_dst
    src = (np.arange(n_dst, dtype=np.float64) + 0.5) * scale - 0.5
    src = np.clip(src, 0, n_src - 1)
    i0 = np.floor(src).astype(np.intp)
    i0 = np.minimum(i0, max(n_src - 2, 0))
    i1 = np.minimum(i0 + 1, n_src - 1)
    w = (src - i0).astype(dtype)
    return i0, i1, w


def upsample_forward(x, H: int, W: int):
    _, h, w = x.shape
    y0, y1, wy = _upsample_axis(h, H, x.dtype)
    x0, x1, wx = _upsample_axis(w, W, x.dtype)
    one = x.dtype.type(1)
    rows = (one - wy)[None, :, None] * x[:, y0, :] + wy[None, :, None] * x[:, y1, :]
    out = (one - wx)[None, None, :] * rows[:, :, x0] + wx[None, None, :] * rows[:, :, x1]
    return out.astype(x.dtype, copy=False)


def upsample_backward(x_shape, H: int, W: int, gout):
    C, h, w = x_shape
    dtype = gout.dtype
    y0, y1, wy = _upsample_axis(h, H, dtype)
    x0, x1, wx = _upsample_axis(w, W, dtype)
    one = dtype.type(1)
    grows = np.zeros((C, H, w), dtype=dtype)
    np.add.at(grows, (slice(None), slice(None), x0), (one - wx)[None, None, :] * gout)
    np.add.at(grows, (slice(None), slice(None), x1), wx[None, None, :] * gout)
    gx = np.zeros((C, h, w), dtype=dtype)
    np.add.at(gx, (slice(None), y0, slice(None)), (one - wy)[None, :, None] * grows)
    np.add.at(gx, (slice(None), y1, slice(None)), wy[None, :, None] * grows)
    return gx
