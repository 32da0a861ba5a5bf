"""Kernel backend selection.

The hot inner loops (conv2d and bilinear warp) exist twice: a Cython
extension (``_ckernels``) compiled at install time and a pure-numpy
fallback. The compiled core is preferred when importable; set
``FFNERV_BACKEND=numpy`` or ``FFNERV_BACKEND=compiled`` to force one.
``benchmarks/bench_kernels.py`` compares the two.
"""
from __future__ import annotations

import os

import numpy as np

from . import numpy_backend

try:
    from . import _ckernels
except ImportError:  # pragma: no cover - build-env dependent
    _ckernels = None

_requested = os.environ.get("FFNERV_BACKEND", "").lower()
if _requested == "compiled" and _ckernels is None:
    raise ImportError("FFNERV_BACKEND=compiled but the ffnerv._ckernels "
                      "extension is not built")
if _requested == "numpy" or _ckernels is None:
    BACKEND = "numpy"
else:
    BACKEND = "compiled"


def _c(a):
    return np.ascontiguousarray(a)


def conv2d_forward(x, w, b, groups, padding):
    if BACKEND == "compiled":
        return _ckernels.conv2d_forward(_c(x), _c(w), _c(b) if b is not None else None,
                                        groups, padding)
    return numpy_backend.conv2d_forward(x, w, b, groups, padding)


def conv2d_backward(x, w, groups, padding, gout, need_input, need_weight):
    if BACKEND == "compiled":
        return _ckernels.conv2d_backward(_c(x), _c(w), groups, padding, _c(gout),
                                         need_input, need_weight)
    return numpy_backend.conv2d_backward(x, w, groups, padding, gout,
                                         need_input, need_weight)


def warp_forward(frame, flow):
    if BACKEND == "compiled":
        return _ckernels.warp_forward(_c(frame), _c(flow))
    return numpy_backend.warp_forward(frame, flow)


def warp_backward(frame, flow, gout, need_frame, need_flow):
    if BACKEND == "compiled":
        return _ckernels.warp_backward(_c(frame), _c(flow), _c(gout),
                                       need_frame, need_flow)
    return numpy_backend.warp_backward(frame, flow, gout, need_frame, need_flow)


# Upsampling is memory-bound and already vectorized; the numpy path is used
# by both backends.
upsample_forward = numpy_backend.upsample_forward
upsample_backward = numpy_backend.upsample_backward
