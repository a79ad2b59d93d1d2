"""Layer primitives with hand-derived backward passes.

Tensors are plain numpy arrays laid out as ``(N, C, H, W)``. Every public
function also accepts a single ``(C, H, W)`` image and returns the result
without the batch axis.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Raised when tensor shapes do not satisfy an operation's contract."""


def _batched(x):
    x = np.asarray(x)
    if x.ndim == 3:
        return x[None], True
    if x.ndim != 4:
        raise ShapeError(f"expected (C,H,W) or (N,C,H,W) tensor, got shape {x.shape}")
    return x, False


def _unbatch(y, squeeze):
    return y[0] if squeeze else y


def conv_output_size(size, kernel, stride, padding):
    span = size + 2 * padding - kernel
    if span < 0:
        raise ShapeError(f"kernel {kernel} larger than padded input {size + 2 * padding}")
    if span % stride:
        raise ShapeError(
            f"non-integral conv output: ({size} + 2*{padding} - {kernel}) / {stride} "
            f"is not an integer"
        )
    return span // stride + 1


def tconv_output_size(size, kernel, stride, padding, output_padding=0):
    if not 0 <= output_padding <= padding:
        raise ShapeError(f"output_padding must lie in [0, padding], got {output_padding}")
    out = (size - 1) * stride - 2 * padding + kernel + output_padding
    if out < 1:
        raise ShapeError(f"transposed conv output size {out} < 1")
    return out


def _im2col(xp, kh, kw, stride, ho, wo):
    # (N, C, Ho, Wo, kh, kw) view of every receptive field
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]


def _scatter(x, w, stride):
    """Full-canvas transposed convolution without bias or cropping.

    Computes ``canvas[n, o, h*s + i, w*s + j] += x[n, c, h, w] * w[c, o, i, j]``
    on a canvas of size ``((H-1)*s + kH, (W-1)*s + kW)``. Each of the s*s
    output phases is a correlation of ``x`` with an m x m sub-kernel
    (m = ceil(k / s)), so everything reduces to one matmul plus a pixel shuffle.
    """
    n, cin, h, wd = x.shape
    _, cout, kh, kw = w.shape
    s = stride
    mh, mw = -(-kh // s), -(-kw // s)
    if mh * s != kh or mw * s != kw:
        w = np.pad(w, ((0, 0), (0, 0), (0, mh * s - kh), (0, mw * s - kw)))
    w6 = w.reshape(cin, cout, mh, s, mw, s)[:, :, ::-1, :, ::-1, :]
    xp = np.pad(x, ((0, 0), (0, 0), (mh - 1, mh - 1), (mw - 1, mw - 1)))
    hp, wp = h + mh - 1, wd + mw - 1
    win = sliding_window_view(xp, (mh, mw), axis=(2, 3))  # (N, Cin, hp, wp, mh, mw)
    out = np.tensordot(win, w6, axes=([1, 4, 5], [0, 2, 4]))  # (N, hp, wp, Cout, s, s)
    canvas = out.transpose(0, 3, 1, 4, 2, 5).reshape(n, cout, hp * s, wp * s)
    return canvas[:, :, : (h - 1) * s + kh, : (wd - 1) * s + kw]


def _check_conv_args(x, w, stride, padding):
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    if padding < 0:
        raise ShapeError(f"padding must be >= 0, got {padding}")
    if w.ndim != 4:
        raise ShapeError(f"weights must be 4-D, got shape {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(
            f"input has {x.shape[1]} channels but weights expect {w.shape[1]} "
            f"(input {x.shape}, weights {w.shape})"
        )


def conv2d_forward(x, w, b=None, stride=1, padding=0):
    """Zero-padded 2-D cross-correlation.

    ``w`` has shape ``(C_out, C_in, kH, kW)``; the output spatial size is
    ``(H + 2*padding - kH) / stride + 1`` and must divide exactly.
    """
    x, squeeze = _batched(x)
    w = np.asarray(w)
    _check_conv_args(x, w, stride, padding)
    cout, _, kh, kw = w.shape
    ho = conv_output_size(x.shape[2], kh, stride, padding)
    wo = conv_output_size(x.shape[3], kw, stride, padding)
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = _im2col(xp, kh, kw, stride, ho, wo)
    y = np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if b is not None:
        y = y + np.asarray(b).reshape(1, cout, 1, 1)
    return _unbatch(np.ascontiguousarray(y), squeeze)


def conv2d_backward(x, w, grad_out, stride=1, padding=0):
    """Gradients of ``sum(grad_out * conv2d_forward(x, w, b))``.

    Returns ``(grad_input, grad_weights, grad_bias)``.
    """
    x, squeeze = _batched(x)
    g, _ = _batched(grad_out)
    w = np.asarray(w)
    _check_conv_args(x, w, stride, padding)
    cout, cin, kh, kw = w.shape
    h, wd = x.shape[2:]
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(wd, kw, stride, padding)
    if g.shape != (x.shape[0], cout, ho, wo):
        raise ShapeError(f"grad_output shape {g.shape} != forward output {(x.shape[0], cout, ho, wo)}")
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = _im2col(xp, kh, kw, stride, ho, wo)
    gw = np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3]))
    gb = g.sum(axis=(0, 2, 3))
    gxp = _scatter(g, w, stride)
    gx = gxp[:, :, padding : padding + h, padding : padding + wd]
    return _unbatch(np.ascontiguousarray(gx), squeeze), gw, gb


def transposed_conv2d_forward(x, w, b=None, stride=1, padding=0, output_padding=0):
    """Transposed convolution (the adjoint of :func:`conv2d_forward`).

    ``w`` has shape ``(C_in, C_out, kH, kW)``, the same array a forward
    convolution from ``C_out`` to ``C_in`` channels would use. Output size is
    ``(H - 1)*stride - 2*padding + kH + output_padding``.
    """
    x, squeeze = _batched(x)
    w = np.asarray(w)
    if w.ndim != 4 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"input channels {x.shape[1]} do not match weights {w.shape}")
    if stride < 1 or padding < 0:
        raise ShapeError(f"invalid stride/padding ({stride}, {padding})")
    _, cout, kh, kw = w.shape
    n, _, h, wd = x.shape
    ho = tconv_output_size(h, kh, stride, padding, output_padding)
    wo = tconv_output_size(wd, kw, stride, padding, output_padding)
    canvas = _scatter(x, w, stride)
    y = canvas[:, :, padding : padding + ho, padding : padding + wo]
    if b is not None:
        y = y + np.asarray(b).reshape(1, cout, 1, 1)
    return _unbatch(np.ascontiguousarray(y), squeeze)


def transposed_conv2d_backward(x, w, grad_out, stride=1, padding=0, output_padding=0):
    """Returns ``(grad_input, grad_weights, grad_bias)`` for the transposed conv."""
    x, squeeze = _batched(x)
    g, _ = _batched(grad_out)
    w = np.asarray(w)
    _, cout, kh, kw = w.shape
    n, _, h, wd = x.shape
    ho = tconv_output_size(h, kh, stride, padding, output_padding)
    wo = tconv_output_size(wd, kw, stride, padding, output_padding)
    if g.shape != (n, cout, ho, wo):
        raise ShapeError(f"grad_output shape {g.shape} != forward output {(n, cout, ho, wo)}")
    hb, wb = (h - 1) * stride + kh, (wd - 1) * stride + kw
    canvas = np.zeros((n, cout, hb, wb), dtype=g.dtype)
    canvas[:, :, padding : padding + ho, padding : padding + wo] = g
    cols = _im2col(canvas, kh, kw, stride, h, wd)
    gx = np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    gw = np.tensordot(x, cols, axes=([0, 2, 3], [0, 2, 3]))
    gb = g.sum(axis=(0, 2, 3))
    return _unbatch(np.ascontiguousarray(gx), squeeze), gw, gb


def prelu_forward(x, slopes):
    x, squeeze = _batched(x)
    a = np.asarray(slopes).reshape(1, -1, 1, 1)
    if a.shape[1] != x.shape[1]:
        raise ShapeError(f"{a.shape[1]} slopes for {x.shape[1]} channels")
    return _unbatch(np.where(x > 0, x, a * x), squeeze)


def prelu_backward(x, slopes, grad_out):
    """Returns ``(grad_input, grad_slopes)``."""
    x, squeeze = _batched(x)
    g, _ = _batched(grad_out)
    a = np.asarray(slopes).reshape(1, -1, 1, 1)
    pos = x > 0
    gx = np.where(pos, g, a * g)
    ga = np.where(pos, 0, x * g).sum(axis=(0, 2, 3))
    return _unbatch(gx, squeeze), ga


def avg_pool2_forward(x):
    x, squeeze = _batched(x)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"2x2 pooling needs even spatial dims, got {h}x{w}")
    y = x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))
    return _unbatch(y, squeeze)


def avg_pool2_backward(grad_out):
    g, squeeze = _batched(grad_out)
    gx = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * 0.25
    return _unbatch(gx, squeeze)


def global_avg_pool_forward(x):
    """(N, C, H, W) -> (N, C, 1, 1)."""
    x, squeeze = _batched(x)
    return _unbatch(x.mean(axis=(2, 3), keepdims=True), squeeze)


def global_avg_pool_backward(grad_out, spatial):
    g, squeeze = _batched(grad_out)
    h, w = spatial
    gx = np.broadcast_to(g / (h * w), g.shape[:2] + (h, w)).copy()
    return _unbatch(gx, squeeze)


def resample_forward(x, rows, cols):
    """Apply a separable linear resampler: ``rows @ x @ cols.T`` per channel."""
    x, squeeze = _batched(x)
    y = np.matmul(np.matmul(rows, x), cols.T)
    return _unbatch(y, squeeze)


def resample_backward(grad_out, rows, cols):
    g, squeeze = _batched(grad_out)
    return _unbatch(np.matmul(np.matmul(rows.T, g), cols), squeeze)
