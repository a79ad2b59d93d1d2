import itertools

import numpy as np
import pytest

from switchsr.models import ModelSpec, build, minimal_spec, train
from switchsr.switch import (
    DIFFICULT,
    EASY,
    LabelingError,
    PatchLabel,
    RoutingAssignment,
    SwitchClassifier,
    accuracy,
    assign_best,
    coupled_train,
    label_by_delta_ssim,
    label_for,
    read_labels,
    relabel,
    route,
    route_patches,
    score_matrix,
    train_switch,
    write_assignment,
    write_labels,
)

from conftest import make_pair


def _mixed_pairs(n, seed=0, size=32):
    r = np.random.default_rng(seed)
    out = []
    for i in range(n):
        if i % 2:
            hr = (np.indices((size, size)).sum(axis=0) // 2 % 2) * r.uniform(0.5, 1.0)
        else:
            hr = np.full((size, size), r.uniform(0.2, 0.8))
        out.append(make_pair(f"p{i:03d}", hr))
    return out


class _ConstModel:
    """Expert that paints every SR output with one gray level."""

    scale = 4

    def __init__(self, value):
        self.value = value

    def forward(self, lr):
        n, c, h, w = np.shape(lr)
        return np.full((n, c, 4 * h, 4 * w), self.value)


# --- labeling -------------------------------------------------------------

def test_label_rule():
    assert label_for(0.91 - 0.88, 0.02) == DIFFICULT
    assert label_for(0.02, 0.02) == DIFFICULT
    assert label_for(0.0199, 0.02) == EASY


def test_bicubic_as_deep_model_labels_all_easy():
    patches = _mixed_pairs(6)
    labels = label_by_delta_ssim(patches, build(ModelSpec("bicubic_baseline")), tau=0.02)
    assert all(l.delta_ssim == 0.0 and l.label == EASY for l in labels)
    assert [l.patch_id for l in labels] == [p.id for p in patches]


def test_label_rejects_nonpositive_tau():
    with pytest.raises(ValueError):
        label_by_delta_ssim(_mixed_pairs(2), build(ModelSpec("bicubic_baseline")), tau=0.0)


def test_metric_failure_names_patch():
    tiny = make_pair("tiny", np.zeros((8, 8)))
    with pytest.raises(LabelingError, match="tiny"):
        label_by_delta_ssim([tiny], build(ModelSpec("bicubic_baseline")), 0.02)


def test_threshold_monotonicity_and_partition():
    deltas = np.random.default_rng(0).normal(scale=0.05, size=200)
    labels = [PatchLabel(f"p{i}", float(d), label_for(d, 0.02), 0.02) for i, d in enumerate(deltas)]
    previous = None
    for tau in (0.01, 0.02, 0.03, 0.05):
        hard = {l.patch_id for l in relabel(labels, tau) if l.label == DIFFICULT}
        easy = {l.patch_id for l in relabel(labels, tau) if l.label == EASY}
        assert not hard & easy and len(hard | easy) == len(labels)
        if previous is not None:
            assert hard <= previous
        previous = hard


def test_labels_csv_round_trip(tmp_path):
    labels = [PatchLabel("a", 0.031, DIFFICULT, 0.02), PatchLabel("b", -0.2, EASY, 0.02)]
    write_labels(tmp_path / "l.csv", labels)
    assert (tmp_path / "l.csv").read_text().splitlines()[0] == "patch_id,delta_ssim,label,threshold"
    assert read_labels(tmp_path / "l.csv") == labels


# --- routing --------------------------------------------------------------

def _clf_with_scores(scores):
    clf = SwitchClassifier(len(scores), seed=0)
    clf.params["head.w"][:] = 0.0
    clf.params["head.b"][:] = scores
    return clf


def test_route_prefers_higher_score():
    assert route(_clf_with_scores([0.9, 0.1]), np.zeros((1, 16, 16))) == 0
    assert route(_clf_with_scores([0.1, 0.9]), np.zeros((1, 16, 16))) == 1


def test_route_tie_goes_to_lower_index():
    assert route(_clf_with_scores([0.5, 0.5]), np.zeros((1, 16, 16))) == 0
    assert route(_clf_with_scores([0.2, 0.7, 0.7]), np.zeros((1, 16, 16))) == 1


def test_routing_is_deterministic_and_survives_reserialization(tmp_path):
    clf = SwitchClassifier(3, seed=4)
    x = np.random.default_rng(0).uniform(size=(20, 1, 16, 16))
    first = clf.route(x)
    np.testing.assert_array_equal(first, clf.route(x))
    clf.save(tmp_path / "sw")
    back = SwitchClassifier.load(tmp_path / "sw")
    np.testing.assert_array_equal(back.route(x), first)
    np.testing.assert_array_equal(back.scores(x), clf.scores(x))


def test_classifier_load_missing(tmp_path):
    with pytest.raises(FileNotFoundError, match="sw.spec"):
        SwitchClassifier.load(tmp_path / "sw")


def test_separable_set_is_learned():
    r = np.random.default_rng(0)
    n = 64
    checker = (np.indices((16, 16)).sum(axis=0) % 2).astype(np.float64)
    x = np.empty((n, 1, 16, 16))
    y = np.arange(n) % 2
    for i in range(n):
        level = r.uniform(0.2, 0.8)
        x[i, 0] = level if y[i] == 0 else level + 0.2 * (checker - 0.5)
    xv = np.stack([np.full((1, 16, 16), v) for v in (0.3, 0.6)] + [0.5 + 0.2 * (checker[None] - 0.5)] * 2)
    clf, trace = train_switch(SwitchClassifier(2, seed=0), x, y, epochs=10, lr=0.05, seed=0,
                              val=(xv, np.array([0, 0, 1, 1])))
    assert len(trace) == 10
    assert accuracy(clf, x, y) >= 0.95
    assert trace[-1] >= 0.95


def test_zero_epochs_returns_untrained():
    clf = SwitchClassifier(2, seed=1)
    before = {k: v.copy() for k, v in clf.params.items()}
    x = np.random.default_rng(0).uniform(size=(4, 1, 16, 16))
    out, trace = train_switch(clf, x, [0, 1, 0, 1], epochs=0, lr=0.1)
    assert trace == []
    assert all(np.array_equal(before[k], out.params[k]) for k in before)


def test_switch_training_needs_two_classes():
    with pytest.raises(ValueError, match="two classes"):
        train_switch(SwitchClassifier(2), np.zeros((3, 1, 16, 16)), [1, 1, 1], 1, 0.1)


def test_switch_training_is_seed_deterministic():
    x = np.random.default_rng(0).uniform(size=(12, 1, 16, 16))
    y = np.arange(12) % 2
    a, _ = train_switch(SwitchClassifier(2, seed=3), x, y, 2, 0.05, seed=8)
    b, _ = train_switch(SwitchClassifier(2, seed=3), x, y, 2, 0.05, seed=8)
    assert all(a.params[k].tobytes() == b.params[k].tobytes() for k in a.params)


# --- oracle assignment ----------------------------------------------------

def test_assign_best_argmin_example():
    patches = _mixed_pairs(2)
    mse = np.array([[0.1, 0.2], [0.3, 0.1]])
    models = [_ConstModel(0.0), _ConstModel(0.0)]
    assignment, hist = assign_best(patches, models, scores=(mse, 10 * np.log10(1 / mse)))
    assert assignment.as_dict() == {"p000": 0, "p001": 1}
    assert hist.tolist() == [1, 1]
    assert assignment.provenance == "oracle_loss"


def test_assign_best_ties_to_lower_index():
    patches = _mixed_pairs(3)
    models = [_ConstModel(0.4), _ConstModel(0.4), _ConstModel(0.9)]
    assignment, hist = assign_best(patches, models)
    assert set(assignment.indices.tolist()) <= {0, 2}
    by_psnr, _ = assign_best(patches, models, "max_psnr")
    assert set(by_psnr.indices.tolist()) <= {0, 2}


def test_single_model_takes_everything():
    patches = _mixed_pairs(5)
    assignment, hist = assign_best(patches, [build(ModelSpec("bicubic_baseline"))])
    assert hist.tolist() == [5]


def test_assign_best_dominance_brute_force():
    patches = _mixed_pairs(6, seed=2)
    models = [build(minimal_spec("fsrcnn_t"), seed=s) for s in range(3)] + [build(ModelSpec("bicubic_baseline"))]
    mse, db = score_matrix(patches, models)
    assignment, _ = assign_best(patches, models, scores=(mse, db))
    rows = np.arange(len(patches))
    chosen = mse[rows, assignment.indices]
    assert np.all(chosen[:, None] <= mse)
    best_total = min(sum(mse[i, k] for i, k in enumerate(combo))
                     for combo in itertools.product(range(len(models)), repeat=len(patches)))
    assert chosen.sum() == pytest.approx(best_total, abs=0)
    by_psnr, _ = assign_best(patches, models, "max_psnr", scores=(mse, db))
    assert db[rows, by_psnr.indices].mean() >= db.mean(axis=0).max()


def test_assign_best_rejects_mixed_scales():
    with pytest.raises(ValueError, match="scale"):
        assign_best(_mixed_pairs(1), [build(ModelSpec("bicubic_baseline", 2)), build(ModelSpec("bicubic_baseline", 4))])


def test_assignment_requires_every_patch():
    with pytest.raises(ValueError):
        RoutingAssignment(["a", "b"], [0], "classifier")
    with pytest.raises(ValueError):
        RoutingAssignment(["a"], [0], "guess")


def test_assignment_csv(tmp_path):
    write_assignment(tmp_path / "a.csv", RoutingAssignment(["x", "y"], [1, 0], "threshold", 2))
    assert (tmp_path / "a.csv").read_text() == "patch_id,model_index,provenance\nx,1,threshold\ny,0,threshold\n"


def test_route_patches_histogram():
    patches = _mixed_pairs(7)
    out = route_patches(_clf_with_scores([0.0, 1.0]), patches)
    assert out.histogram().tolist() == [0, 7]
    assert out.provenance == "classifier"


# --- coupled training -----------------------------------------------------

def test_coupled_single_expert_collapses_to_plain_training():
    patches = _mixed_pairs(8)
    a = build(minimal_spec("fsrcnn_t"), seed=0)
    b = build(minimal_spec("fsrcnn_t"), seed=0)
    models, clf, reports = coupled_train([a], SwitchClassifier(1), patches, rounds=1, seed=3,
                                         expert_lr=0.05, batch_size=4)
    train(b, patches, 1, 0.05, seed=3, batch_size=4)
    assert all(a.params[k].tobytes() == b.params[k].tobytes() for k in a.params)
    (rep,) = reports
    assert rep.classifier_accuracy == 1.0
    assert rep.histogram == [8] and rep.routed_histogram == [8]
    assert not rep.classifier_trained


def test_coupled_reports_and_invariants():
    patches = _mixed_pairs(12, seed=1)
    models = [build(minimal_spec("fsrcnn_t"), seed=0), build(minimal_spec("drln_proxy_t"), seed=1),
              build(ModelSpec("bicubic_baseline"))]
    _, _, reports = coupled_train(models, SwitchClassifier(3, seed=0), patches, rounds=2, seed=0,
                                  switch_epochs=2, expert_lr=0.02, batch_size=4)
    for rep in reports:
        assert sum(rep.histogram) == len(patches)
        assert sum(rep.routed_histogram) == len(patches)
        assert rep.mean_assigned_loss <= min(rep.single_model_losses)
        if not np.isnan(rep.previous_assignment_loss):
            assert rep.mean_assigned_loss <= rep.previous_assignment_loss
        assert rep.skipped_experts == [k for k, c in enumerate(rep.routed_histogram) if c == 0]


def test_coupled_validates_arguments():
    with pytest.raises(ValueError):
        coupled_train([build(ModelSpec("bicubic_baseline"))], SwitchClassifier(2), _mixed_pairs(2), 1)
    with pytest.raises(ValueError):
        coupled_train([build(ModelSpec("bicubic_baseline"))], SwitchClassifier(1), _mixed_pairs(2), 0)
