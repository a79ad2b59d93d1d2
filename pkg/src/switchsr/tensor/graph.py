"""Fixed-topology layer graphs.

A :class:`Graph` is an ordered list of :class:`LayerSpec` nodes. Each node
names the earlier nodes it consumes (``"input"`` is the graph input), so
skips, differences and concatenations can be expressed without a general
autodiff tape: backward simply walks the list in reverse and calls the
hand-written derivative of each layer kind.
"""

from dataclasses import dataclass, field

import numpy as np

from ..imaging.resample import resample_macs, resize_matrix
from . import ops

INPUT = "input"

LAYER_KINDS = (
    "conv",
    "transposed_conv",
    "prelu",
    "add_skip",
    "concat",
    "upsample_bicubic",
    "avg_pool",
    "global_avg_pool",
)
PARAM_KINDS = ("conv", "transposed_conv", "prelu")


class SpecError(ValueError):
    """An inconsistent layer stack; ``index`` is the offending layer."""

    def __init__(self, index, message):
        super().__init__(f"layer {index}: {message}")
        self.index = index


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    inputs: tuple = (INPUT,)
    in_channels: int = 1
    out_channels: int = 1
    kernel: tuple = (1, 1)
    stride: int = 1
    padding: int = 0
    output_padding: int = 0
    coeffs: tuple = ()  # add_skip weights, default all ones
    scale: int = 1  # upsample_bicubic factor
    init_gain: float = 1.0


def conv(name, cin, cout, k, stride=1, padding=None, src=INPUT, init_gain=1.0):
    pad = (k - 1) // 2 if padding is None else padding
    return LayerSpec(name, "conv", (src,), cin, cout, (k, k), stride, pad, init_gain=init_gain)


def tconv(name, cin, cout, k, stride, padding, output_padding=0, src=INPUT, init_gain=1.0):
    return LayerSpec(name, "transposed_conv", (src,), cin, cout, (k, k), stride, padding,
                     output_padding, init_gain=init_gain)


def prelu(name, channels, src):
    return LayerSpec(name, "prelu", (src,), channels, channels)


def add(name, channels, *srcs, coeffs=()):
    return LayerSpec(name, "add_skip", tuple(srcs), channels, channels, coeffs=tuple(coeffs))


def concat(name, channel_list, *srcs):
    return LayerSpec(name, "concat", tuple(srcs), sum(channel_list), sum(channel_list))


@dataclass
class Graph:
    layers: list
    in_channels: int = 1
    outputs: tuple = ()
    _shapes: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.outputs and self.layers:
            self.outputs = (self.layers[-1].name,)

    @property
    def output(self):
        return self.outputs[0] if self.outputs else INPUT

    def infer_shapes(self, input_shape):
        """Map every node name to its ``(C, H, W)`` shape for the given input."""
        key = tuple(input_shape)
        if key in self._shapes:
            return self._shapes[key]
        shapes = {INPUT: key}
        if key[0] != self.in_channels:
            raise SpecError(0, f"graph expects {self.in_channels} input channels, got {key[0]}")
        for i, layer in enumerate(self.layers):
            if layer.name in shapes:
                raise SpecError(i, f"duplicate node name {layer.name!r}")
            for src in layer.inputs:
                if src not in shapes:
                    raise SpecError(i, f"{layer.name!r} consumes unknown node {src!r}")
            try:
                shapes[layer.name] = _infer(layer, [shapes[s] for s in layer.inputs])
            except ops.ShapeError as exc:
                raise SpecError(i, f"{layer.name!r} ({layer.kind}): {exc}") from None
        self._shapes[key] = shapes
        return shapes

    def param_shapes(self):
        out = {}
        for layer in self.layers:
            kh, kw = layer.kernel
            if layer.kind == "conv":
                out[f"{layer.name}.w"] = (layer.out_channels, layer.in_channels, kh, kw)
                out[f"{layer.name}.b"] = (layer.out_channels,)
            elif layer.kind == "transposed_conv":
                out[f"{layer.name}.w"] = (layer.in_channels, layer.out_channels, kh, kw)
                out[f"{layer.name}.b"] = (layer.out_channels,)
            elif layer.kind == "prelu":
                out[f"{layer.name}.a"] = (layer.in_channels,)
        return out

    def init_params(self, seed, dtype=np.float32):
        """He-uniform (fan-in) weights, zero biases, PReLU slopes at 0.25."""
        rng = np.random.default_rng(seed)
        params = {}
        for layer in self.layers:
            kh, kw = layer.kernel
            if layer.kind in ("conv", "transposed_conv"):
                fan_in = layer.in_channels * kh * kw
                if layer.kind == "transposed_conv":
                    # each output pixel sees roughly k*k/stride^2 input taps
                    fan_in = max(1.0, fan_in / layer.stride ** 2)
                bound = layer.init_gain * np.sqrt(6.0 / fan_in)
                shape = self.param_shapes()[f"{layer.name}.w"]
                params[f"{layer.name}.w"] = rng.uniform(-bound, bound, shape).astype(dtype)
                params[f"{layer.name}.b"] = np.zeros(layer.out_channels, dtype=dtype)
            elif layer.kind == "prelu":
                params[f"{layer.name}.a"] = np.full(layer.in_channels, 0.25, dtype=dtype)
        return params

    def flops(self, input_shape):
        """Flop count (2 per multiply-accumulate) of one forward pass."""
        shapes = self.infer_shapes(input_shape)
        total = 0
        for layer in self.layers:
            c, h, w = shapes[layer.name]
            kh, kw = layer.kernel
            if layer.kind == "conv":
                total += 2 * layer.in_channels * layer.out_channels * kh * kw * h * w
            elif layer.kind == "transposed_conv":
                _, hi, wi = shapes[layer.inputs[0]]
                total += 2 * layer.in_channels * layer.out_channels * kh * kw * hi * wi
            elif layer.kind == "upsample_bicubic":
                _, hi, wi = shapes[layer.inputs[0]]
                total += c * int(resample_macs(hi, wi, h, w))
        return total

    def forward(self, params, x):
        """Run the graph on a batch ``(N, C, H, W)``; returns all activations."""
        x = np.asarray(x)
        self.infer_shapes(x.shape[1:])
        acts = {INPUT: x}
        for layer in self.layers:
            acts[layer.name] = _forward(layer, params, [acts[s] for s in layer.inputs])
        return acts

    def backward(self, params, acts, output_grads):
        """Back-propagate ``{node: dL/dnode}``; returns ``(param_grads, input_grad)``."""
        grads = {k: v for k, v in output_grads.items()}
        pgrads = {}
        for layer in reversed(self.layers):
            g = grads.pop(layer.name, None)
            if g is None:
                continue
            xs = [acts[s] for s in layer.inputs]
            in_grads = _backward(layer, params, xs, acts[layer.name], g, pgrads)
            for src, gi in zip(layer.inputs, in_grads):
                if gi is None:
                    continue
                if src in grads:
                    grads[src] = grads[src] + gi
                else:
                    grads[src] = gi
        for name, shape in self.param_shapes().items():
            if name not in pgrads:
                pgrads[name] = np.zeros(shape, dtype=params[name].dtype)
        return pgrads, grads.get(INPUT)


def _infer(layer, in_shapes):
    kind = layer.kind
    if kind not in LAYER_KINDS:
        raise ops.ShapeError(f"unknown layer kind {kind!r}")
    if kind != "concat" and kind != "add_skip" and len(in_shapes) != 1:
        raise ops.ShapeError(f"{kind} takes exactly one input, got {len(in_shapes)}")
    c, h, w = in_shapes[0]
    if kind in ("conv", "transposed_conv", "prelu", "upsample_bicubic", "avg_pool",
                "global_avg_pool") and c != layer.in_channels:
        raise ops.ShapeError(f"declared {layer.in_channels} input channels, got {c}")
    kh, kw = layer.kernel
    if kind == "conv":
        return (layer.out_channels, ops.conv_output_size(h, kh, layer.stride, layer.padding),
                ops.conv_output_size(w, kw, layer.stride, layer.padding))
    if kind == "transposed_conv":
        return (layer.out_channels,
                ops.tconv_output_size(h, kh, layer.stride, layer.padding, layer.output_padding),
                ops.tconv_output_size(w, kw, layer.stride, layer.padding, layer.output_padding))
    if kind == "prelu":
        return (c, h, w)
    if kind == "add_skip":
        if any(s != in_shapes[0] for s in in_shapes):
            raise ops.ShapeError(f"add_skip inputs differ in shape: {in_shapes}")
        if layer.coeffs and len(layer.coeffs) != len(in_shapes):
            raise ops.ShapeError(f"{len(layer.coeffs)} coefficients for {len(in_shapes)} inputs")
        if c != layer.out_channels:
            raise ops.ShapeError(f"declared {layer.out_channels} channels, got {c}")
        return (c, h, w)
    if kind == "concat":
        if any(s[1:] != (h, w) for s in in_shapes):
            raise ops.ShapeError(f"concat inputs differ spatially: {in_shapes}")
        total = sum(s[0] for s in in_shapes)
        if total != layer.out_channels:
            raise ops.ShapeError(f"declared {layer.out_channels} channels, concat gives {total}")
        return (total, h, w)
    if kind == "upsample_bicubic":
        return (c, h * layer.scale, w * layer.scale)
    if kind == "avg_pool":
        if h % 2 or w % 2:
            raise ops.ShapeError(f"2x2 pooling needs even dims, got {h}x{w}")
        return (c, h // 2, w // 2)
    return (c, 1, 1)


def _forward(layer, params, xs):
    kind = layer.kind
    p = layer.name
    if kind == "conv":
        return ops.conv2d_forward(xs[0], params[p + ".w"], params[p + ".b"],
                                  layer.stride, layer.padding)
    if kind == "transposed_conv":
        return ops.transposed_conv2d_forward(xs[0], params[p + ".w"], params[p + ".b"],
                                             layer.stride, layer.padding, layer.output_padding)
    if kind == "prelu":
        return ops.prelu_forward(xs[0], params[p + ".a"])
    if kind == "add_skip":
        coeffs = layer.coeffs or (1.0,) * len(xs)
        out = coeffs[0] * xs[0] if coeffs[0] != 1.0 else xs[0].copy()
        for c, x in zip(coeffs[1:], xs[1:]):
            out = out + (x if c == 1.0 else c * x)
        return out
    if kind == "concat":
        return np.concatenate(xs, axis=1)
    if kind == "upsample_bicubic":
        h, w = xs[0].shape[2:]
        rows = resize_matrix(h, h * layer.scale).astype(xs[0].dtype)
        cols = resize_matrix(w, w * layer.scale).astype(xs[0].dtype)
        return ops.resample_forward(xs[0], rows, cols)
    if kind == "avg_pool":
        return ops.avg_pool2_forward(xs[0])
    return ops.global_avg_pool_forward(xs[0])


def _accumulate(pgrads, name, g):
    pgrads[name] = pgrads[name] + g if name in pgrads else g


def _backward(layer, params, xs, y, g, pgrads):
    kind = layer.kind
    p = layer.name
    if kind == "conv":
        gx, gw, gb = ops.conv2d_backward(xs[0], params[p + ".w"], g, layer.stride, layer.padding)
        _accumulate(pgrads, p + ".w", gw)
        _accumulate(pgrads, p + ".b", gb)
        return [gx]
    if kind == "transposed_conv":
        gx, gw, gb = ops.transposed_conv2d_backward(xs[0], params[p + ".w"], g, layer.stride,
                                                    layer.padding, layer.output_padding)
        _accumulate(pgrads, p + ".w", gw)
        _accumulate(pgrads, p + ".b", gb)
        return [gx]
    if kind == "prelu":
        gx, ga = ops.prelu_backward(xs[0], params[p + ".a"], g)
        _accumulate(pgrads, p + ".a", ga)
        return [gx]
    if kind == "add_skip":
        coeffs = layer.coeffs or (1.0,) * len(xs)
        return [g if c == 1.0 else c * g for c in coeffs]
    if kind == "concat":
        bounds = np.cumsum([x.shape[1] for x in xs])[:-1]
        return np.split(g, bounds, axis=1)
    if kind == "upsample_bicubic":
        h, w = xs[0].shape[2:]
        rows = resize_matrix(h, h * layer.scale).astype(g.dtype)
        cols = resize_matrix(w, w * layer.scale).astype(g.dtype)
        return [ops.resample_backward(g, rows, cols)]
    if kind == "avg_pool":
        return [ops.avg_pool2_backward(g)]
    return [ops.global_avg_pool_backward(g, xs[0].shape[2:])]
