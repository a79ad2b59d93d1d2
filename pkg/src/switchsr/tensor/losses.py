"""Mean-reduced reconstruction and classification losses.

Each function returns ``(value, grad)`` where ``grad`` is the derivative of
``value`` with respect to the prediction.
"""

import numpy as np

from .ops import ShapeError

LOSS_KINDS = ("l2", "l1", "charbonnier")
DEFAULT_CHARBONNIER_EPS = 1e-3


def _diff(pred, target):
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    return pred - target


def l2_loss(pred, target):
    d = _diff(pred, target)
    return float(np.mean(d * d)), 2.0 * d / d.size


def l1_loss(pred, target):
    d = _diff(pred, target)
    return float(np.mean(np.abs(d))), np.sign(d) / d.size


def charbonnier_loss(pred, target, eps=DEFAULT_CHARBONNIER_EPS):
    """Mean of ``sqrt(d**2 + eps**2)``, a smooth stand-in for L1."""
    if eps <= 0:
        raise ValueError(f"charbonnier eps must be > 0, got {eps}")
    d = _diff(pred, target)
    r = np.sqrt(d * d + eps * eps)
    return float(np.mean(r)), d / r / d.size


def loss(kind, pred, target, eps=DEFAULT_CHARBONNIER_EPS):
    if kind == "l2":
        return l2_loss(pred, target)
    if kind == "l1":
        return l1_loss(pred, target)
    if kind == "charbonnier":
        return charbonnier_loss(pred, target, eps)
    raise ValueError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")


def softmax(scores):
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(scores, labels):
    """Mean softmax cross-entropy of ``(N, K)`` scores against integer labels."""
    scores = np.asarray(scores)
    labels = np.asarray(labels, dtype=np.int64)
    n = scores.shape[0]
    p = softmax(scores)
    value = -np.mean(np.log(np.maximum(p[np.arange(n), labels], 1e-300)))
    grad = p.copy()
    grad[np.arange(n), labels] -= 1.0
    return float(value), grad / n
