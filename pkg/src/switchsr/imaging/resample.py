"""Separable bicubic resampling with the Keys kernel (a = -0.5).

Sampling is center-aligned: output pixel ``i`` maps to source coordinate
``(i + 0.5) / scale - 0.5``. Out-of-range taps are clamped to the edge.
When shrinking, the kernel is widened by ``1/scale`` so the result is
low-pass filtered rather than point-sampled.
"""

from functools import lru_cache

import numpy as np

A = -0.5


def cubic_kernel(t, a=A):
    t = np.abs(np.asarray(t, dtype=np.float64))
    t2 = t * t
    t3 = t2 * t
    near = (a + 2) * t3 - (a + 3) * t2 + 1
    far = a * t3 - 5 * a * t2 + 8 * a * t - 4 * a
    return np.where(t <= 1, near, np.where(t < 2, far, 0.0))


@lru_cache(maxsize=256)
def _matrix(in_size, out_size, antialias):
    scale = out_size / in_size
    kscale = min(scale, 1.0) if antialias else 1.0
    support = 2.0 / kscale
    centers = (np.arange(out_size) + 0.5) / scale - 0.5
    first = np.floor(centers - support).astype(int) + 1
    ntaps = int(np.ceil(2 * support)) + 1
    taps = first[:, None] + np.arange(ntaps)[None, :]
    weights = kscale * cubic_kernel(kscale * (centers[:, None] - taps))
    weights /= weights.sum(axis=1, keepdims=True)
    mat = np.zeros((out_size, in_size))
    rows = np.repeat(np.arange(out_size), ntaps)
    np.add.at(mat, (rows, np.clip(taps, 0, in_size - 1).ravel()), weights.ravel())
    mat.setflags(write=False)
    return mat


def resize_matrix(in_size, out_size, antialias=True):
    """``(out_size, in_size)`` matrix whose rows hold the resampling weights."""
    if in_size < 1 or out_size < 1:
        raise ValueError(f"degenerate resize {in_size} -> {out_size}")
    return _matrix(int(in_size), int(out_size), bool(antialias))


def resize_array(x, out_h, out_w, antialias=True, clamp=True):
    """Resize the last two axes of ``x`` to ``(out_h, out_w)``."""
    x = np.asarray(x, dtype=np.float64)
    rows = resize_matrix(x.shape[-2], out_h, antialias)
    cols = resize_matrix(x.shape[-1], out_w, antialias)
    y = np.matmul(np.matmul(rows, x), cols.T)
    if clamp:
        np.clip(y, 0.0, 1.0, out=y)
    return y


def resample_macs(in_h, in_w, out_h, out_w, antialias=True):
    """Multiply-accumulates (counted as 2 flops each) for one channel resize."""
    rows = resize_matrix(in_h, out_h, antialias)
    cols = resize_matrix(in_w, out_w, antialias)
    # rows pass on (in_h, in_w) then cols pass on (out_h, in_w)
    return 2 * (np.count_nonzero(rows) * in_w + np.count_nonzero(cols) * out_h)
