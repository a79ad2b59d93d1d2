from pathlib import Path

from ..tensor.weights_io import load_weights, save_weights
from .zoo import ModelSpec, build


def save_model(model, stem):
    """Write ``<stem>.spec`` (key=value text) and ``<stem>.srw`` (SRW1 weights)."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    stem.with_suffix(".spec").write_text(model.spec.to_text(), encoding="utf-8")
    save_weights(stem.with_suffix(".srw"), model.state_dict())


def load_model(stem):
    stem = Path(stem)
    for path in (stem.with_suffix(".spec"), stem.with_suffix(".srw")):
        if not path.exists():
            raise FileNotFoundError(f"missing model file {path}")
    spec = ModelSpec.from_text(stem.with_suffix(".spec").read_text(encoding="utf-8"))
    model = build(spec, 0)
    model.load_state_dict(load_weights(stem.with_suffix(".srw")))
    return model
