import numpy as np
import pytest

from switchsr.imaging.resample import resample_macs
from switchsr.models import (
    MODEL_NAMES,
    CascadeModel,
    ModelSpec,
    build,
    flops,
    load_model,
    minimal_grad_check,
    minimal_spec,
    model_grad_check,
    save_model,
    train,
)
from switchsr.models.training import clip_gradients

from conftest import make_pair

TRAINABLE = [n for n in MODEL_NAMES if n != "bicubic_baseline"]


@pytest.mark.parametrize("name", MODEL_NAMES)
@pytest.mark.parametrize("h,w", [(8, 8), (12, 12), (16, 16), (8, 12)])
def test_forward_shape(name, h, w):
    model = build(minimal_spec(name), seed=0)
    x = np.random.default_rng(0).uniform(size=(1, h, w))
    y = model.forward(x)
    assert y.shape == (1, 4 * h, 4 * w)
    assert y.min() >= 0.0 and y.max() <= 1.0
    assert model.forward(x[None]).shape == (1, 1, 4 * h, 4 * w)


def test_default_fsrcnn_shape():
    model = build(ModelSpec("fsrcnn_t", 4, {"d": 16, "s": 4, "m": 2}), seed=0)
    assert model.forward(np.zeros((1, 16, 16))).shape == (1, 64, 64)


@pytest.mark.parametrize("name", ["fsrcnn_t", "dbpn_t", "lapsrn_t", "drln_proxy_t", "bicubic_baseline"])
def test_scale_two(name):
    model = build(ModelSpec(name, 2, dict(minimal_spec(name).hyper)), seed=0)
    assert model.forward(np.zeros((1, 8, 8))).shape == (1, 16, 16)


def test_cascade_goes_through_two_2x_stages():
    model = build(ModelSpec("dbpn_cascade_t"), seed=3)
    assert isinstance(model, CascadeModel)
    x = np.random.default_rng(0).uniform(size=(1, 16, 16))
    mid = model.stages[0].forward(x)
    assert mid.shape == (1, 32, 32)
    assert all(s.scale == 2 for s in model.stages)
    np.testing.assert_array_equal(model.forward(x), model.stages[1].forward(mid))
    # independently initialized stages
    p0, p1 = model.stages[0].params, model.stages[1].params
    assert any(not np.array_equal(p0[k], p1[k]) for k in p0)


def test_cascade_must_be_4x():
    with pytest.raises(ValueError):
        ModelSpec("dbpn_cascade_t", 2)


def test_unknown_model_rejected():
    with pytest.raises(ValueError, match="unknown model"):
        ModelSpec("srgan")


@pytest.mark.parametrize("name", TRAINABLE)
def test_same_seed_same_weights(name):
    a, b = build(ModelSpec(name), seed=11), build(ModelSpec(name), seed=11)
    c = build(ModelSpec(name), seed=12)
    sa, sb, sc = a.state_dict(), b.state_dict(), c.state_dict()
    assert all(sa[k].tobytes() == sb[k].tobytes() for k in sa)
    assert any(sa[k].tobytes() != sc[k].tobytes() for k in sa)


def test_zero_weights_give_zero_output():
    model = build(ModelSpec("fsrcnn_t", 4, {"residual": 0}), seed=0)
    model.params = {k: np.zeros_like(v) for k, v in model.params.items()}
    x = np.random.default_rng(0).uniform(size=(1, 8, 8))
    assert not model.predict_raw(x).any()
    assert not model.forward(x).any()


def test_residual_default_adds_bicubic_skip():
    model = build(ModelSpec("fsrcnn_t"), seed=0)
    model.params = {k: np.zeros_like(v) for k, v in model.params.items()}
    baseline = build(ModelSpec("bicubic_baseline"))
    x = np.random.default_rng(0).uniform(size=(1, 8, 8))
    np.testing.assert_allclose(model.forward(x), baseline.forward(x), atol=1e-6)


def test_wrong_channel_count_rejected():
    with pytest.raises(ValueError):
        build(minimal_spec("fsrcnn_t")).forward(np.zeros((3, 8, 8)))


# --- flops ----------------------------------------------------------------

def test_fsrcnn_flops_by_hand():
    hw = 16 * 16
    convs = (2 * 1 * 16 * 25 * hw      # extraction 5x5
             + 2 * 16 * 4 * hw         # shrink 1x1
             + 2 * (2 * 4 * 4 * 9 * hw)  # two 3x3 mapping layers
             + 2 * 4 * 16 * hw         # expand 1x1
             + 2 * 16 * 1 * 81 * hw)   # 9x9 deconvolution, one pass per LR pixel
    skip = resample_macs(16, 16, 64, 64)
    assert flops(ModelSpec("fsrcnn_t")) == convs + skip


def _distinct_clamped_taps(n_in, n_out):
    # 4 taps per output pixel when upscaling; taps past an edge collapse onto it
    total = 0
    for i in range(n_out):
        c = (i + 0.5) * n_in / n_out - 0.5
        first = int(np.floor(c)) - 1
        total += len({min(max(t, 0), n_in - 1) for t in range(first, first + 4)})
    return total


def test_bicubic_flops_counts_distinct_taps():
    nnz = _distinct_clamped_taps(16, 64)
    assert nnz == 64 * 4 - 16
    assert flops(ModelSpec("bicubic_baseline")) == 2 * (nnz * 16 + nnz * 64)


def test_cascade_flops_is_sum_of_stages():
    model = build(ModelSpec("dbpn_cascade_t"))
    stage = build(ModelSpec("dbpn_t", 2))
    assert model.flops((1, 16, 16)) == stage.flops((1, 16, 16)) + stage.flops((1, 32, 32))


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_flops_grow_with_input(name):
    spec = ModelSpec(name)
    assert flops(spec, (1, 16, 16)) > flops(spec, (1, 8, 8)) > 0


def test_deep_costs_more_than_shallow():
    assert flops(ModelSpec("fsrcnn_t")) < flops(ModelSpec("dbpn_t"))


# --- gradient checks ------------------------------------------------------

@pytest.mark.parametrize("name", MODEL_NAMES)
@pytest.mark.parametrize("seed", [0, 7])
def test_minimal_model_gradients(name, seed):
    rep = minimal_grad_check(name, seed=seed)
    assert rep.max_relative_error < 1e-4
    if name != "bicubic_baseline":
        assert rep.checked > 0


def test_full_fsrcnn_gradients():
    rep = model_grad_check(ModelSpec("fsrcnn_t"), seed=7, lr_size=6, max_entries=6)
    assert rep.max_relative_error < 1e-4
    assert rep.checked >= 50


def test_bicubic_gradcheck_is_empty():
    rep = minimal_grad_check("bicubic_baseline")
    assert rep.max_relative_error == 0 and rep.parameter_count == 0


# --- training -------------------------------------------------------------

def _pairs(n, seed=0, value=None, size=16):
    r = np.random.default_rng(seed)
    out = []
    for i in range(n):
        v = r.uniform(0.1, 0.9) if value is None else value
        out.append(make_pair(f"c{i}", np.full((size, size), v)))
    return out


def test_zero_learning_rate_leaves_weights():
    model = build(minimal_spec("dbpn_t"), seed=0)
    before = {k: v.copy() for k, v in model.params.items()}
    train(model, _pairs(4), epochs=1, lr=0.0)
    assert all(np.array_equal(before[k], model.params[k]) for k in before)


@pytest.mark.parametrize("name,lr", [("fsrcnn_t", 0.2), ("dbpn_t", 0.1), ("drln_proxy_t", 0.1)])
def test_constant_images_loss_drops_tenfold(name, lr):
    model = build(ModelSpec(name), seed=0)
    _, losses = train(model, _pairs(8), epochs=20, lr=lr, seed=0, batch_size=4)
    assert losses[-1] <= losses[0] / 10


def test_training_is_seed_deterministic():
    pairs = _pairs(6, seed=1)
    runs = []
    for _ in range(2):
        model = build(minimal_spec("lapsrn_t"), seed=5)
        _, losses = train(model, pairs, epochs=3, lr=0.05, seed=9, batch_size=4)
        runs.append((losses, model.state_dict()))
    assert runs[0][0] == runs[1][0]
    assert all(runs[0][1][k].tobytes() == runs[1][1][k].tobytes() for k in runs[0][1])


def test_cascade_training_updates_both_stages():
    model = build(minimal_spec("dbpn_cascade_t"), seed=0)
    before = {k: v.copy() for k, v in model.params.items()}
    _, losses = train(model, _pairs(4), epochs=2, lr=0.05)
    assert len(losses) == 2
    after = model.params
    for stage in ("stage0.", "stage1."):
        assert any(not np.array_equal(before[k], after[k]) for k in before if k.startswith(stage))


def test_train_rejects_empty_and_mismatched():
    model = build(minimal_spec("fsrcnn_t"))
    with pytest.raises(ValueError):
        train(model, [], 1, 0.1)
    with pytest.raises(ValueError):
        train(build(ModelSpec("fsrcnn_t", 2, dict(minimal_spec("fsrcnn_t").hyper))), _pairs(2), 1, 0.1)


def test_gradient_clipping():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    norm = clip_gradients(grads, 1.0)
    assert norm == 5.0
    assert float(np.hypot(grads["a"][0], grads["b"][0])) == pytest.approx(1.0)
    small = {"a": np.array([0.1])}
    clip_gradients(small, 1.0)
    assert small["a"][0] == 0.1


# --- persistence ----------------------------------------------------------

@pytest.mark.parametrize("name", MODEL_NAMES)
def test_save_load_round_trip(tmp_path, name):
    model = build(minimal_spec(name), seed=4)
    save_model(model, tmp_path / name)
    back = load_model(tmp_path / name)
    assert back.spec == model.spec
    x = np.random.default_rng(0).uniform(size=(1, 8, 8))
    np.testing.assert_array_equal(back.forward(x), model.forward(x))


def test_load_missing_names_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="nothing.spec"):
        load_model(tmp_path / "nothing")


def test_spec_text_round_trip():
    spec = ModelSpec("lapsrn_t", 2, {"convs": 3})
    assert ModelSpec.from_text(spec.to_text()) == spec
