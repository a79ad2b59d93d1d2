import logging

import numpy as np

from ..imaging.resample import resize_array
from ..tensor.optim import SGD
from .zoo import BicubicBaseline, CascadeModel

log = logging.getLogger(__name__)

CLIP_NORM = 0.1


def stack_pairs(patches, dtype=np.float32):
    """Stack ``patch.lr`` / ``patch.hr`` into ``(N, 1, h, w)`` / ``(N, 1, H, W)`` arrays."""
    if not patches:
        raise ValueError("no patches to train on")
    shapes = {(p.lr.shape, p.hr.shape) for p in patches}
    if len(shapes) != 1:
        raise ValueError(f"patches must share dimensions, found {sorted(shapes)}")
    lr = np.stack([p.lr for p in patches]).astype(dtype)
    hr = np.stack([p.hr for p in patches]).astype(dtype)
    return lr, hr


def clip_gradients(grads, max_norm):
    """Rescale ``grads`` in place so their global L2 norm is at most ``max_norm``."""
    norm = float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))
    if max_norm and norm > max_norm:
        factor = max_norm / norm
        for k in grads:
            grads[k] = grads[k] * np.asarray(factor, dtype=grads[k].dtype)
    return norm


def fit_arrays(model, lr, hr, epochs, learning_rate, seed=0, momentum=0.9, batch_size=8,
               clip_norm=CLIP_NORM):
    """Minibatch SGD on stacked arrays; returns the per-epoch mean loss."""
    if epochs < 0:
        raise ValueError(f"epochs must be >= 0, got {epochs}")
    rng = np.random.default_rng(seed)
    opt = SGD(learning_rate, momentum)
    n = lr.shape[0]
    history = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            value, grads = model.loss_and_grads(lr[idx], hr[idx])
            clip_gradients(grads, clip_norm)
            if learning_rate > 0:
                opt.step(model.params, grads)
            total += value * len(idx)
        history.append(total / n)
        log.debug("%s epoch %d loss %.6g", model.spec.name, epoch + 1, history[-1])
    return history


def train(model, patches, epochs, lr, seed=0, momentum=0.9, batch_size=8, clip_norm=CLIP_NORM):
    """Train ``model`` in place on ``patches`` (objects with ``.lr`` and ``.hr``).

    Returns ``(model, losses)`` with one mean training loss per epoch. The
    shuffle order is drawn from ``seed`` so reruns are bit-identical.
    """
    lr_all, hr_all = stack_pairs(patches)
    if lr_all.shape[-1] * model.scale != hr_all.shape[-1]:
        raise ValueError(f"LR {lr_all.shape[-2:]} x{model.scale} does not give HR {hr_all.shape[-2:]}")
    if isinstance(model, BicubicBaseline):
        value = float(np.mean([model.eval_loss(lr_all, hr_all)]))
        return model, [value] * epochs
    if isinstance(model, CascadeModel):
        h, w = hr_all.shape[-2:]
        mid = resize_array(hr_all, h // 2, w // 2).astype(np.float32)
        first = fit_arrays(model.stages[0], lr_all, mid, epochs, lr, seed, momentum, batch_size, clip_norm)
        second = fit_arrays(model.stages[1], mid, hr_all, epochs, lr, seed + 1, momentum, batch_size, clip_norm)
        return model, [0.5 * (a + b) for a, b in zip(first, second)]
    return model, fit_arrays(model, lr_all, hr_all, epochs, lr, seed, momentum, batch_size, clip_norm)
