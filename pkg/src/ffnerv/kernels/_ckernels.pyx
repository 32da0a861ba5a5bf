# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for conv2d and bilinear warp (float32/float64).

Semantics match ffnerv.kernels.numpy_backend; summation order may differ,
so cross-backend results agree only to floating-point tolerance. Each
backend is individually deterministic.
"""
import numpy as np

cimport cython
from libc.math cimport floor

ctypedef fused floating:
    float
    double


def conv2d_forward(floating[:, :, ::1] x, floating[:, :, :, ::1] w, b,
                   int groups, int padding):
    cdef Py_ssize_t C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t O = w.shape[0], Cg = w.shape[1], k = w.shape[2]
    cdef Py_ssize_t Ho = H + 2 * padding - k + 1
    cdef Py_ssize_t Wo = W + 2 * padding - k + 1
    cdef Py_ssize_t Og = O // groups
    out_arr = np.zeros((O, Ho, Wo), dtype=np.asarray(x).dtype)
    cdef floating[:, :, ::1] out = out_arr
    cdef floating[::1] bv
    cdef Py_ssize_t o, gi, cg, c, ky, kx, oy, ox, iy, ix, oy0, oy1, ox0, ox1
    cdef floating wv, bval

    with nogil:
        for o in range(O):
            gi = o // Og
            for cg in range(Cg):
                c = gi * Cg + cg
                for ky in range(k):
                    oy0 = padding - ky if padding - ky > 0 else 0
                    oy1 = H + padding - ky if H + padding - ky < Ho else Ho
                    for kx in range(k):
                        wv = w[o, cg, ky, kx]
                        if wv == 0:
                            continue
                        ox0 = padding - kx if padding - kx > 0 else 0
                        ox1 = W + padding - kx if W + padding - kx < Wo else Wo
                        for oy in range(oy0, oy1):
                            iy = oy - padding + ky
                            for ox in range(ox0, ox1):
                                out[o, oy, ox] += wv * x[c, iy, ox - padding + kx]
    if b is not None:
        bv = b
        for o in range(O):
            bval = bv[o]
            for oy in range(Ho):
                for ox in range(Wo):
                    out[o, oy, ox] += bval
    return out_arr


def conv2d_backward(floating[:, :, ::1] x, floating[:, :, :, ::1] w,
                    int groups, int padding, floating[:, :, ::1] gout,
                    bint need_input, bint need_weight):
    cdef Py_ssize_t C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t O = w.shape[0], Cg = w.shape[1], k = w.shape[2]
    cdef Py_ssize_t Ho = gout.shape[1], Wo = gout.shape[2]
    cdef Py_ssize_t Og = O // groups
    np_dtype = np.asarray(x).dtype
    gb_arr = np.zeros(O, dtype=np_dtype)
    gx_arr = np.zeros((C, H, W), dtype=np_dtype) if need_input else None
    gw_arr = np.zeros((O, Cg, k, k), dtype=np_dtype) if need_weight else None
    cdef floating[::1] gb = gb_arr
    cdef floating[:, :, ::1] gx = gx_arr if need_input else x[:0]
    cdef floating[:, :, :, ::1] gw = gw_arr if need_weight else w[:0]
    cdef Py_ssize_t o, gi, cg, c, ky, kx, oy, ox, iy, oy0, oy1, ox0, ox1
    cdef floating wv, acc, gv

    with nogil:
        for o in range(O):
            for oy in range(Ho):
                acc = 0
                for ox in range(Wo):
                    acc += gout[o, oy, ox]
                gb[o] += acc
            gi = o // Og
            for cg in range(Cg):
                c = gi * Cg + cg
                for ky in range(k):
                    oy0 = padding - ky if padding - ky > 0 else 0
                    oy1 = H + padding - ky if H + padding - ky < Ho else Ho
                    for kx in range(k):
                        ox0 = padding - kx if padding - kx > 0 else 0
                        ox1 = W + padding - kx if W + padding - kx < Wo else Wo
                        if need_weight:
                            acc = 0
                            for oy in range(oy0, oy1):
                                iy = oy - padding + ky
                                for ox in range(ox0, ox1):
                                    acc += gout[o, oy, ox] * x[c, iy, ox - padding + kx]
                            gw[o, cg, ky, kx] = acc
                        if need_input:
                            wv = w[o, cg, ky, kx]
                            if wv != 0:
                                for oy in range(oy0, oy1):
                                    iy = oy - padding + ky
                                    for ox in range(ox0, ox1):
                                        gx[c, iy, ox - padding + kx] += wv * gout[o, oy, ox]
    return gx_arr, gw_arr, gb_arr


def warp_forward(floating[:, :, ::1] frame, floating[:, :, ::1] flow):
    cdef Py_ssize_t C = frame.shape[0], H = frame.shape[1], W = frame.shape[2]
    out_arr = np.empty((C, H, W), dtype=np.asarray(frame).dtype)
    cdef floating[:, :, ::1] out = out_arr
    cdef Py_ssize_t c, y, x, x0, x1, y0, y1
    cdef floating xs, ys, wx, wy

    with nogil:
        for y in range(H):
            for x in range(W):
                xs = x + flow[0, y, x]
                if xs < 0:
                    xs = 0
                elif xs > W - 1:
                    xs = W - 1
                ys = y + flow[1, y, x]
                if ys < 0:
                    ys = 0
                elif ys > H - 1:
                    ys = H - 1
                x0 = <Py_ssize_t>floor(xs)
                if x0 > W - 2:
                    x0 = W - 2 if W > 1 else 0
                y0 = <Py_ssize_t>floor(ys)
                if y0 > H - 2:
                    y0 = H - 2 if H > 1 else 0
                x1 = x0 + 1 if x0 + 1 < W else W - 1
                y1 = y0 + 1 if y0 + 1 < H else H - 1
                wx = xs - x0
                wy = ys - y0
                for c in range(C):
                    out[c, y, x] = ((1 - wy) * ((1 - wx) * frame[c, y0, x0]
                                                + wx * frame[c, y0, x1])
                                    + wy * ((1 - wx) * frame[c, y1, x0]
                                            + wx * frame[c, y1, x1]))
    return out_arr


def warp_backward(floating[:, :, ::1] frame, floating[:, :, ::1] flow,
                  floating[:, :, ::1] gout, bint need_frame, bint need_flow):
    cdef Py_ssize_t C = frame.shape[0], H = frame.shape[1], W = frame.shape[2]
    np_dtype = np.asarray(frame).dtype
    gframe_arr = np.zeros((C, H, W), dtype=np_dtype) if need_frame else None
    gflow_arr = np.zeros((2, H, W), dtype=np_dtype) if need_flow else None
    cdef floating[:, :, ::1] gframe = gframe_arr if need_frame else frame[:0]
    cdef floating[:, :, ::1] gflow = gflow_arr if need_flow else flow[:0]
    cdef Py_ssize_t c, y, x, x0, x1, y0, y1
    cdef floating xs_raw, ys_raw, xs, ys, wx, wy, g, dx_acc, dy_acc

    with nogil:
        for y in range(H):
            for x in range(W):
                xs_raw = x + flow[0, y, x]
                ys_raw = y + flow[1, y, x]
                xs = xs_raw
                if xs < 0:
                    xs = 0
                elif xs > W - 1:
                    xs = W - 1
                ys = ys_raw
                if ys < 0:
                    ys = 0
                elif ys > H - 1:
                    ys = H - 1
                x0 = <Py_ssize_t>floor(xs)
                if x0 > W - 2:
                    x0 = W - 2 if W > 1 else 0
                y0 = <Py_ssize_t>floor(ys)
                if y0 > H - 2:
                    y0 = H - 2 if H > 1 else 0
                x1 = x0 + 1 if x0 + 1 < W else W - 1
                y1 = y0 + 1 if y0 + 1 < H else H - 1
                wx = xs - x0
                wy = ys - y0
                dx_acc = 0
                dy_acc = 0
                for c in range(C):
                    g = gout[c, y, x]
                    if need_frame:
                        gframe[c, y0, x0] += g * (1 - wy) * (1 - wx)
                        gframe[c, y0, x1] += g * (1 - wy) * wx
                        gframe[c, y1, x0] += g * wy * (1 - wx)
                        gframe[c, y1, x1] += g * wy * wx
                    if need_flow:
                        dx_acc += g * ((1 - wy) * (frame[c, y0, x1] - frame[c, y0, x0])
                                       + wy * (frame[c, y1, x1] - frame[c, y1, x0]))
                        dy_acc += g * ((1 - wx) * (frame[c, y1, x0] - frame[c, y0, x0])
                                       + wx * (frame[c, y1, x1] - frame[c, y0, x1]))
                if need_flow:
                    if 0 < xs_raw < W - 1:
                        gflow[0, y, x] = dx_acc
                    if 0 < ys_raw < H - 1:
                        gflow[1, y, x] = dy_acc
    return gframe_arr, gflow_arr
