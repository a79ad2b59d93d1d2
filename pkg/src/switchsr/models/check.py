import numpy as np

from ..tensor.gradcheck import GradCheckReport, grad_check
from .zoo import BicubicBaseline, CascadeModel, build, minimal_spec


def model_grad_check(spec_or_model, seed=0, lr_size=4, max_entries=12):
    """Finite-difference check of every parameter tensor of a model (float64).

    Cascades are checked stage by stage; the parameter-free baseline yields an
    empty report.
    """
    model = spec_or_model
    if not hasattr(model, "forward"):
        model = build(spec_or_model, seed)
    if isinstance(model, BicubicBaseline):
        return GradCheckReport()
    stages = model.stages if isinstance(model, CascadeModel) else [model]
    rng = np.random.default_rng(seed)
    total = GradCheckReport()
    for i, stage in enumerate(stages):
        x = rng.uniform(0.0, 1.0, (2, 1, lr_size, lr_size))
        rep = grad_check(stage.graph, stage.params, x, stage.spec.loss,
                         max_entries=max_entries, seed=seed + i)
        prefix = f"stage{i}." if len(stages) > 1 else ""
        total.parameter_count += rep.parameter_count
        total.checked += rep.checked
        total.skipped_kinks += rep.skipped_kinks
        total.max_relative_error = max(total.max_relative_error, rep.max_relative_error)
        total.per_layer.update({prefix + k: v for k, v in rep.per_layer.items()})
    return total


def minimal_grad_check(name, seed=0, scale=4):
    return model_grad_check(minimal_spec(name, scale), seed)
