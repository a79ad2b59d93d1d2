"""Desk-scale SR network families built from layer graphs.

Every model maps a ``(1, h, w)`` luma patch to ``(1, scale*h, scale*w)``.
"""

from dataclasses import dataclass, field

import numpy as np

from ..imaging.resample import resize_array
from ..tensor.graph import INPUT, Graph, LayerSpec, SpecError, add, concat, conv, prelu, tconv
from ..tensor.losses import loss as loss_fn

MODEL_NAMES = ("fsrcnn_t", "dbpn_t", "dbpn_cascade_t", "lapsrn_t", "drln_proxy_t", "bicubic_baseline")

DEFAULT_HYPER = {
    "fsrcnn_t": {"d": 16, "s": 4, "m": 2, "residual": 1, "loss": "l2"},
    "dbpn_t": {"stages": 2, "channels": 16, "residual": 1, "loss": "l2"},
    "dbpn_cascade_t": {"stages": 2, "channels": 16, "residual": 1, "loss": "l2"},
    "lapsrn_t": {"convs": 4, "channels": 16, "loss": "charbonnier"},
    "drln_proxy_t": {"blocks": 8, "channels": 16, "residual": 1, "loss": "l2"},
    "bicubic_baseline": {},
}

# smallest settings that still exercise every structural mechanism
MINIMAL_HYPER = {
    "fsrcnn_t": {"d": 3, "s": 2, "m": 1},
    "dbpn_t": {"stages": 2, "channels": 2},
    "dbpn_cascade_t": {"stages": 2, "channels": 2},
    "lapsrn_t": {"convs": 1, "channels": 2},
    "drln_proxy_t": {"blocks": 1, "channels": 2},
    "bicubic_baseline": {},
}

# (kernel, stride, padding) of the back-projection / upsampling layers
PROJECTION = {2: (6, 2, 2), 4: (8, 4, 2)}


@dataclass
class ModelSpec:
    name: str
    scale: int = 4
    hyper: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in MODEL_NAMES:
            raise ValueError(f"unknown model {self.name!r}; expected one of {MODEL_NAMES}")
        if self.scale not in (2, 4):
            raise ValueError(f"scale must be 2 or 4, got {self.scale}")
        if self.name == "dbpn_cascade_t" and self.scale != 4:
            raise ValueError("dbpn_cascade_t composes two 2x stages and is 4x only")
        merged = dict(DEFAULT_HYPER[self.name])
        merged.update(self.hyper)
        self.hyper = merged

    @property
    def loss(self):
        return self.hyper.get("loss", "l2")

    def to_text(self):
        lines = [f"name={self.name}", f"scale={self.scale}"]
        lines += [f"{k}={v}" for k, v in sorted(self.hyper.items())]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        values = {}
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"malformed spec line {raw!r}")
            values[key.strip()] = value.strip()
        name = values.pop("name")
        scale = int(values.pop("scale", 4))
        hyper = {k: (v if k == "loss" else int(v)) for k, v in values.items()}
        return cls(name, scale, hyper)


def minimal_spec(name, scale=4):
    return ModelSpec(name, scale, dict(MINIMAL_HYPER[name]))


def _bicubic_skip(layers, src_name, scale):
    layers.append(LayerSpec("bicubic", "upsample_bicubic", (INPUT,), 1, 1, scale=scale))
    layers.append(add("sr", 1, src_name, "bicubic"))


def fsrcnn_graph(scale, d, s, m, residual=0, **_):
    layers = [conv("extract", 1, d, 5), prelu("extract_act", d, "extract"),
              conv("shrink", d, s, 1, src="extract_act"), prelu("shrink_act", s, "shrink")]
    prev = "shrink_act"
    for i in range(m):
        layers += [conv(f"map{i}", s, s, 3, src=prev), prelu(f"map{i}_act", s, f"map{i}")]
        prev = f"map{i}_act"
    layers += [conv("expand", s, d, 1, src=prev), prelu("expand_act", d, "expand"),
               tconv("deconv", d, 1, 9, scale, 4, scale - 1, src="expand_act",
                     init_gain=0.1 if residual else 1.0)]
    if residual:
        _bicubic_skip(layers, "deconv", scale)
    return Graph(layers)


def _up_projection(p, c, src, k, st, pad):
    return [
        tconv(f"{p}_h0", c, c, k, st, pad, src=src), prelu(f"{p}_h0a", c, f"{p}_h0"),
        conv(f"{p}_l0", c, c, k, st, pad, src=f"{p}_h0a"), prelu(f"{p}_l0a", c, f"{p}_l0"),
        add(f"{p}_err", c, f"{p}_l0a", src, coeffs=(1.0, -1.0)),
        tconv(f"{p}_h1", c, c, k, st, pad, src=f"{p}_err"), prelu(f"{p}_h1a", c, f"{p}_h1"),
        add(p, c, f"{p}_h0a", f"{p}_h1a"),
    ]


def _down_projection(p, c, src, k, st, pad):
    return [
        conv(f"{p}_l0", c, c, k, st, pad, src=src), prelu(f"{p}_l0a", c, f"{p}_l0"),
        tconv(f"{p}_h0", c, c, k, st, pad, src=f"{p}_l0a"), prelu(f"{p}_h0a", c, f"{p}_h0"),
        add(f"{p}_err", c, f"{p}_h0a", src, coeffs=(1.0, -1.0)),
        conv(f"{p}_l1", c, c, k, st, pad, src=f"{p}_err"), prelu(f"{p}_l1a", c, f"{p}_l1"),
        add(p, c, f"{p}_l0a", f"{p}_l1a"),
    ]


def dbpn_graph(scale, stages, channels, residual=1, **_):
    """``stages`` up-projection units interleaved with ``stages - 1`` down units."""
    if stages < 1:
        raise SpecError(0, f"dbpn needs at least one projection stage, got {stages}")
    k, st, pad = PROJECTION[scale]
    c = channels
    layers = [conv("feat0", 1, 2 * c, 3), prelu("feat0_act", 2 * c, "feat0"),
              conv("feat1", 2 * c, c, 1, src="feat0_act"), prelu("feat1_act", c, "feat1")]
    low = "feat1_act"
    highs = []
    for t in range(stages):
        layers += _up_projection(f"up{t}", c, low, k, st, pad)
        highs.append(f"up{t}")
        if t < stages - 1:
            layers += _down_projection(f"down{t}", c, f"up{t}", k, st, pad)
            low = f"down{t}"
    layers.append(concat("hr_cat", [c] * stages, *highs))
    layers.append(conv("recon", c * stages, 1, 3, src="hr_cat", init_gain=0.1 if residual else 1.0))
    if residual:
        _bicubic_skip(layers, "recon", scale)
    return Graph(layers)


def lapsrn_graph(scale, convs, channels, **_):
    """Feature and image branches per 2x level; every level's image is an output."""
    c = channels
    levels = {2: 1, 4: 2}[scale]
    layers = [conv("head", 1, c, 3), prelu("head_act", c, "head")]
    feat, img = "head_act", INPUT
    level_outputs = []
    for lv in range(levels):
        for i in range(convs):
            layers += [conv(f"l{lv}_c{i}", c, c, 3, src=feat), prelu(f"l{lv}_c{i}a", c, f"l{lv}_c{i}")]
            feat = f"l{lv}_c{i}a"
        layers += [tconv(f"l{lv}_up", c, c, 4, 2, 1, src=feat), prelu(f"l{lv}_upa", c, f"l{lv}_up"),
                   conv(f"l{lv}_res", c, 1, 3, src=f"l{lv}_upa", init_gain=0.1),
                   tconv(f"l{lv}_img", 1, 1, 4, 2, 1, src=img),
                   add(f"l{lv}_out", 1, f"l{lv}_img", f"l{lv}_res")]
        feat, img = f"l{lv}_upa", f"l{lv}_out"
        level_outputs.append(img)
    return Graph(layers, outputs=tuple(reversed(level_outputs)))


def drln_proxy_graph(scale, blocks, channels, residual=1, **_):
    k, st, pad = PROJECTION[scale]
    c = channels
    layers = [conv("head", 1, c, 3)]
    prev = "head"
    for b in range(blocks):
        layers += [conv(f"rb{b}_c0", c, c, 3, src=prev), prelu(f"rb{b}_act", c, f"rb{b}_c0"),
                   conv(f"rb{b}_c1", c, c, 3, src=f"rb{b}_act", init_gain=0.1),
                   add(f"rb{b}", c, prev, f"rb{b}_c1")]
        prev = f"rb{b}"
    layers += [conv("body", c, c, 3, src=prev), add("global_skip", c, "body", "head"),
               tconv("up", c, c, k, st, pad, src="global_skip"), prelu("up_act", c, "up"),
               conv("tail", c, 1, 3, src="up_act", init_gain=0.1 if residual else 1.0)]
    if residual:
        _bicubic_skip(layers, "tail", scale)
    return Graph(layers)


GRAPH_BUILDERS = {
    "fsrcnn_t": fsrcnn_graph,
    "dbpn_t": dbpn_graph,
    "lapsrn_t": lapsrn_graph,
    "drln_proxy_t": drln_proxy_graph,
}


def _bilinear_kernel(k, stride):
    f = np.ceil(k / 2.0)
    center = (2 * f - 1 - f % 2) / (2.0 * f)
    t = 1 - np.abs(np.arange(k) / f - center)
    return np.outer(t, t)


def _as_batch(x):
    x = np.asarray(x)
    if x.ndim == 3:
        return x[None], True
    if x.ndim != 4:
        raise ValueError(f"expected (1,h,w) or (N,1,h,w) input, got shape {x.shape}")
    return x, False


class SRModel:
    """A trainable network defined by one layer graph."""

    def __init__(self, spec, graph, params):
        self.spec = spec
        self.graph = graph
        self.params = params

    @property
    def scale(self):
        return self.spec.scale

    @property
    def trainable(self):
        return bool(self.params)

    def _check_input(self, x):
        if x.shape[1] != 1:
            raise ValueError(f"{self.spec.name} expects 1-channel input, got {x.shape[1]}")
        try:
            self.graph.infer_shapes(x.shape[1:])
        except SpecError as exc:
            raise ValueError(f"{self.spec.name} cannot process input {x.shape[1:]}: {exc}") from None

    def predict_raw(self, x):
        """Unclamped forward pass in the parameters' precision."""
        xb, squeeze = _as_batch(x)
        dtype = next(iter(self.params.values())).dtype if self.params else np.float64
        xb = xb.astype(dtype, copy=False)
        self._check_input(xb)
        y = self.graph.forward(self.params, xb)[self.graph.output]
        return y[0] if squeeze else y

    def forward(self, x):
        return np.clip(self.predict_raw(x), 0.0, 1.0)

    def targets(self, hr):
        """Training targets for every graph output (coarser levels get downscaled HR)."""
        out = {self.graph.outputs[0]: hr}
        h, w = hr.shape[-2:]
        for i, name in enumerate(self.graph.outputs[1:], start=1):
            f = 2 ** i
            out[name] = resize_array(hr, h // f, w // f, clamp=False).astype(hr.dtype)
        return out

    def loss_and_grads(self, lr, hr):
        acts = self.graph.forward(self.params, lr)
        total = 0.0
        out_grads = {}
        for name, target in self.targets(hr).items():
            value, g = loss_fn(self.spec.loss, acts[name], target)
            total += value
            out_grads[name] = g.astype(acts[name].dtype, copy=False)
        grads, _ = self.graph.backward(self.params, acts, out_grads)
        return total, grads

    def eval_loss(self, lr, hr):
        acts = self.graph.forward(self.params, lr)
        return sum(loss_fn(self.spec.loss, acts[n], t)[0] for n, t in self.targets(hr).items())

    def flops(self, lr_shape=(1, 16, 16)):
        return self.graph.flops(tuple(lr_shape))

    def state_dict(self):
        return dict(self.params)

    def load_state_dict(self, tensors):
        expected = self.graph.param_shapes()
        if set(tensors) != set(expected):
            missing = sorted(set(expected) - set(tensors))
            extra = sorted(set(tensors) - set(expected))
            raise ValueError(f"weights do not match {self.spec.name}: missing {missing}, extra {extra}")
        for name, shape in expected.items():
            if tuple(tensors[name].shape) != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {tensors[name].shape}")
        self.params = {k: np.array(tensors[k], dtype=np.float32) for k in expected}


class BicubicBaseline:
    """Pure resampler with no parameters."""

    def __init__(self, spec):
        self.spec = spec
        self.graph = Graph([LayerSpec("bicubic", "upsample_bicubic", (INPUT,), 1, 1, scale=spec.scale)])
        self.params = {}

    scale = SRModel.scale
    trainable = SRModel.trainable
    state_dict = SRModel.state_dict
    flops = SRModel.flops

    def predict_raw(self, x):
        xb, squeeze = _as_batch(x)
        y = self.graph.forward({}, xb.astype(np.float64))[self.graph.output]
        return y[0] if squeeze else y

    def forward(self, x):
        return np.clip(self.predict_raw(x), 0.0, 1.0)

    def eval_loss(self, lr, hr):
        return loss_fn("l2", self.predict_raw(lr), hr)[0]

    def load_state_dict(self, tensors):
        if tensors:
            raise ValueError("bicubic_baseline has no parameters")


class CascadeModel:
    """Two independently trained 2x networks applied back to back."""

    def __init__(self, spec, stages):
        self.spec = spec
        self.stages = stages

    scale = SRModel.scale

    @property
    def trainable(self):
        return True

    @property
    def params(self):
        out = {}
        for i, stage in enumerate(self.stages):
            out.update({f"stage{i}.{k}": v for k, v in stage.params.items()})
        return out

    def forward(self, x):
        for stage in self.stages:
            x = stage.forward(x)
        return x

    def predict_raw(self, x):
        return self.stages[1].predict_raw(self.stages[0].forward(x))

    def eval_loss(self, lr, hr):
        return loss_fn(self.spec.loss, self.predict_raw(lr), hr)[0]

    def flops(self, lr_shape=(1, 16, 16)):
        c, h, w = lr_shape
        return self.stages[0].flops((c, h, w)) + self.stages[1].flops((c, 2 * h, 2 * w))

    def state_dict(self):
        return self.params

    def load_state_dict(self, tensors):
        for i, stage in enumerate(self.stages):
            prefix = f"stage{i}."
            stage.load_state_dict({k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)})


def build(spec, seed=0):
    """Instantiate a model with seeded He-uniform initial weights."""
    if spec.name == "bicubic_baseline":
        return BicubicBaseline(spec)
    if spec.name == "dbpn_cascade_t":
        stage_spec = ModelSpec("dbpn_t", 2, dict(spec.hyper))
        return CascadeModel(spec, [build(stage_spec, seed), build(stage_spec, seed + 1)])
    graph = GRAPH_BUILDERS[spec.name](spec.scale, **spec.hyper)
    graph.infer_shapes((1, 8, 8))
    params = graph.init_params(seed)
    for layer in graph.layers:
        if layer.kind == "transposed_conv" and layer.name.endswith("_img"):
            w = np.zeros((1, 1) + layer.kernel, dtype=np.float32)
            w[0, 0] = _bilinear_kernel(layer.kernel[0], layer.stride)
            params[f"{layer.name}.w"] = w
    return SRModel(spec, graph, params)
