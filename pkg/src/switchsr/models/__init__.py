from .check import minimal_grad_check, model_grad_check
from .persist import load_model, save_model
from .training import fit_arrays, stack_pairs, train
from .zoo import (
    DEFAULT_HYPER,
    MINIMAL_HYPER,
    MODEL_NAMES,
    BicubicBaseline,
    CascadeModel,
    ModelSpec,
    SRModel,
    build,
    minimal_spec,
)


def flops(spec_or_model, lr_shape=(1, 16, 16)):
    """Flops (2 per multiply-accumulate) of one forward pass on an LR patch."""
    model = build(spec_or_model) if isinstance(spec_or_model, ModelSpec) else spec_or_model
    return model.flops(tuple(lr_shape))
