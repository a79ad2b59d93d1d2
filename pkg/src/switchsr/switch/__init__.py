from .classifier import SwitchClassifier, accuracy, switch_graph, train_switch
from .routing import (
    DIFFICULT,
    EASY,
    LABEL_INDEX,
    LabelingError,
    PatchLabel,
    RoundReport,
    RoutingAssignment,
    assign_best,
    coupled_train,
    delta_ssim,
    label_by_delta_ssim,
    label_for,
    read_labels,
    relabel,
    route_patches,
    score_matrix,
    write_assignment,
    write_labels,
)


def route(classifier, lr_patch):
    """Expert index for a single LR patch (or an array of indices for a batch)."""
    idx = classifier.route(lr_patch)
    return int(idx[0]) if getattr(lr_patch, "ndim", 4) == 3 else idx
