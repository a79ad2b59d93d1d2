from dataclasses import dataclass, field

import numpy as np

from .losses import loss


@dataclass
class GradCheckReport:
    max_relative_error: float = 0.0
    parameter_count: int = 0
    checked: int = 0
    skipped_kinks: int = 0
    per_layer: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.max_relative_error < 1e-4


def relative_error(analytic, numeric, floor=1e-10):
    denom = max(abs(analytic), abs(numeric), floor)
    return abs(analytic - numeric) / denom


def grad_check(graph, params, x, loss_kind="l2", target=None, h=1e-5, max_entries=None, seed=0):
    """Compare back-propagated parameter gradients with central differences.

    Everything is promoted to float64. ``max_entries`` caps the number of
    entries probed per parameter tensor (chosen at random with ``seed``);
    ``None`` probes them all. Entries whose perturbation flips the sign of
    any PReLU input straddle a kink where the loss is not differentiable;
    they are excluded and counted in ``skipped_kinks``.
    """
    rng = np.random.default_rng(seed)
    params = {k: np.asarray(v, dtype=np.float64).copy() for k, v in params.items()}
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    out_shape = (x.shape[0],) + graph.infer_shapes(x.shape[1:])[graph.output]
    if target is None:
        target = rng.uniform(0.0, 1.0, out_shape)

    kink_inputs = [l.inputs[0] for l in graph.layers if l.kind == "prelu"]

    def objective():
        acts = graph.forward(params, x)
        value, _ = loss(loss_kind, acts[graph.output], target)
        return value, [acts[n] > 0 for n in kink_inputs]

    report = GradCheckReport(parameter_count=sum(v.size for v in params.values()))
    if not params:
        return report
    acts = graph.forward(params, x)
    signs = [acts[n] > 0 for n in kink_inputs]
    _, gout = loss(loss_kind, acts[graph.output], target)
    analytic, _ = graph.backward(params, acts, {graph.output: gout})

    for name in sorted(params):
        p = params[name]
        flat = p.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, max_entries, replace=False))
        worst = 0.0
        skipped = 0
        a_flat = analytic[name].reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            up, up_signs = objective()
            flat[i] = orig - h
            down, down_signs = objective()
            flat[i] = orig
            if not all(np.array_equal(a, b) and np.array_equal(a, c)
                       for a, b, c in zip(signs, up_signs, down_signs)):
                skipped += 1
                continue
            numeric = (up - down) / (2 * h)
            worst = max(worst, relative_error(float(a_flat[i]), numeric))
        layer = name.rsplit(".", 1)[0]
        report.per_layer[layer] = max(report.per_layer.get(layer, 0.0), worst)
        report.checked += len(idx) - skipped
        report.skipped_kinks += skipped
        report.max_relative_error = max(report.max_relative_error, worst)
    return report
