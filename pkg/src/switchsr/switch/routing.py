"""Easy/difficult labeling, oracle assignment and coupled switch+expert training."""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from ..imaging.metrics import psnr, ssim
from ..models.training import stack_pairs, train
from ..models.zoo import ModelSpec, build
from .classifier import accuracy, train_switch

log = logging.getLogger(__name__)

EASY, DIFFICULT = "easy", "difficult"
LABEL_INDEX = {EASY: 0, DIFFICULT: 1}
PROVENANCES = ("oracle_psnr", "oracle_loss", "threshold", "classifier")


class LabelingError(RuntimeError):
    def __init__(self, patch_id, cause):
        super().__init__(f"metric failure on patch {patch_id}: {cause}")
        self.patch_id = patch_id


@dataclass
class PatchLabel:
    patch_id: str
    delta_ssim: float
    label: str
    threshold_used: float


def label_for(delta, tau):
    return DIFFICULT if delta >= tau else EASY


def _predict(model, patches, chunk=64):
    lr, _ = stack_pairs(patches)
    outs = [model.forward(lr[i : i + chunk]) for i in range(0, len(lr), chunk)]
    return np.concatenate(outs)


def delta_ssim(patches, deep_model, baseline=None):
    """SSIM(deep SR, HR) - SSIM(bicubic SR, HR) per patch."""
    if baseline is None:
        baseline = build(ModelSpec("bicubic_baseline", deep_model.scale))
    deep = _predict(deep_model, patches)
    bic = _predict(baseline, patches)
    out = []
    for p, d, b in zip(patches, deep, bic):
        try:
            out.append(ssim(d, p.hr) - ssim(b, p.hr))
        except ValueError as exc:
            raise LabelingError(p.id, exc) from exc
    return out


def label_by_delta_ssim(patches, deep_model, tau=0.02, baseline=None):
    """Difficult iff the deep model beats bicubic by at least ``tau`` SSIM."""
    if tau <= 0:
        raise ValueError(f"threshold must be > 0, got {tau}")
    deltas = delta_ssim(patches, deep_model, baseline)
    return [PatchLabel(p.id, d, label_for(d, tau), tau) for p, d in zip(patches, deltas)]


def relabel(labels, tau):
    return [PatchLabel(l.patch_id, l.delta_ssim, label_for(l.delta_ssim, tau), tau) for l in labels]


def write_labels(path, labels):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patch_id", "delta_ssim", "label", "threshold"])
        for l in labels:
            w.writerow([l.patch_id, f"{l.delta_ssim:.9g}", l.label, f"{l.threshold_used:.9g}"])


def read_labels(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return [PatchLabel(r["patch_id"], float(r["delta_ssim"]), r["label"], float(r["threshold"]))
                for r in csv.DictReader(fh)]


@dataclass
class RoutingAssignment:
    patch_ids: list
    indices: np.ndarray
    provenance: str
    models: int = 1

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if len(self.indices) != len(self.patch_ids):
            raise ValueError("every patch needs exactly one model index")

    def histogram(self):
        return np.bincount(self.indices, minlength=self.models)

    def as_dict(self):
        return dict(zip(self.patch_ids, self.indices.tolist()))


def write_assignment(path, assignment):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patch_id", "model_index", "provenance"])
        for pid, idx in zip(assignment.patch_ids, assignment.indices.tolist()):
            w.writerow([pid, idx, assignment.provenance])


def score_matrix(patches, models):
    """Per-patch MSE and PSNR of every model's clamped output, each ``(N, K)``."""
    mse = np.empty((len(patches), len(models)))
    db = np.empty_like(mse)
    for k, model in enumerate(models):
        sr = _predict(model, patches)
        for i, p in enumerate(patches):
            mse[i, k] = float(np.mean((sr[i].astype(np.float64) - p.hr) ** 2))
            db[i, k] = psnr(sr[i], p.hr)
    return mse, db


def assign_best(patches, models, criterion="min_loss", scores=None):
    """Route every patch to its best model; ties go to the lower index.

    Returns ``(assignment, histogram)``. ``scores`` may carry a precomputed
    ``score_matrix`` result.
    """
    if not models:
        raise ValueError("assign_best needs at least one model")
    if len({m.scale for m in models}) != 1:
        raise ValueError("all models must share one scale")
    mse, db = scores if scores is not None else score_matrix(patches, models)
    if criterion == "min_loss":
        idx, prov = np.argmin(mse, axis=1), "oracle_loss"
    elif criterion == "max_psnr":
        idx, prov = np.argmax(db, axis=1), "oracle_psnr"
    else:
        raise ValueError(f"unknown criterion {criterion!r}")
    assignment = RoutingAssignment([p.id for p in patches], idx, prov, len(models))
    return assignment, assignment.histogram()


def route_patches(classifier, patches):
    lr, _ = stack_pairs(patches)
    idx = np.concatenate([classifier.route(lr[i : i + 256]) for i in range(0, len(lr), 256)])
    return RoutingAssignment([p.id for p in patches], idx, "classifier", classifier.classes)


@dataclass
class RoundReport:
    round: int
    histogram: list
    routed_histogram: list
    classifier_accuracy: float
    mean_assigned_loss: float
    previous_assignment_loss: float
    single_model_losses: list
    skipped_experts: list = field(default_factory=list)
    classifier_trained: bool = True


def coupled_train(models, classifier, patches, rounds, seed=0, switch_epochs=5, switch_lr=0.05,
                  expert_lr=0.1, momentum=0.9, batch_size=8):
    """Alternate oracle reassignment, switch training and routed fine-tuning.

    Each round: (a) assign every patch to its minimum-loss expert, (b) train
    the switch on those assignments, (c) route all patches with the switch,
    (d) fine-tune each expert for one epoch on the patches routed to it.
    Experts that receive nothing in (d) are skipped and listed in the report.
    """
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    if classifier.classes != len(models):
        raise ValueError(f"classifier has {classifier.classes} classes for {len(models)} experts")
    lr_all, _ = stack_pairs(patches)
    reports = []
    previous = None
    for r in range(rounds):
        mse, db = score_matrix(patches, models)
        assignment, hist = assign_best(patches, models, "min_loss", (mse, db))
        rows = np.arange(len(patches))
        assigned_loss = float(np.mean(mse[rows, assignment.indices]))
        prev_loss = float(np.mean(mse[rows, previous])) if previous is not None else float("nan")
        # same summation order as the assigned loss, so the dominance holds bit-for-bit
        singles = [float(np.mean(np.ascontiguousarray(mse[:, k]))) for k in range(len(models))]

        trained = np.unique(assignment.indices).size >= 2
        if trained:
            train_switch(classifier, lr_all, assignment.indices, switch_epochs, switch_lr,
                         seed=seed + 1000 * r, momentum=momentum)
        routed = route_patches(classifier, patches)
        acc = accuracy(classifier, lr_all, assignment.indices)

        skipped = []
        for k, model in enumerate(models):
            subset = [p for p, i in zip(patches, routed.indices) if i == k]
            if not subset:
                skipped.append(k)
                log.info("round %d: expert %d received no patches, skipped", r + 1, k)
                continue
            if model.trainable:
                train(model, subset, 1, expert_lr, seed=seed + 1000 * r + k,
                      momentum=momentum, batch_size=batch_size)
        previous = routed.indices
        reports.append(RoundReport(
            r + 1, hist.tolist(), routed.histogram().tolist(), acc, assigned_loss, prev_loss,
            singles, skipped, trained))
    return models, classifier, reports
