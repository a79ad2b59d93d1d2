from pathlib import Path

import numpy as np

from ..models.training import clip_gradients
from ..tensor.graph import Graph, LayerSpec, conv, prelu
from ..tensor.losses import cross_entropy
from ..tensor.optim import SGD
from ..tensor.weights_io import load_weights, save_weights


def switch_graph(classes, width=8):
    """Four 3x3 convs with two 2x2 poolings, global pooling and a linear head."""
    w1, w2 = width, 2 * width
    layers = [
        conv("c0", 1, w1, 3), prelu("c0a", w1, "c0"),
        LayerSpec("p0", "avg_pool", ("c0a",), w1, w1),
        conv("c1", w1, w2, 3, src="p0"), prelu("c1a", w2, "c1"),
        LayerSpec("p1", "avg_pool", ("c1a",), w2, w2),
        conv("c2", w2, w2, 3, src="p1"), prelu("c2a", w2, "c2"),
        conv("c3", w2, w2, 3, src="c2a"), prelu("c3a", w2, "c3"),
        LayerSpec("gap", "global_avg_pool", ("c3a",), w2, w2),
        conv("head", w2, classes, 1, src="gap"),
    ]
    return Graph(layers)


CLIP_NORM = 1.0


class SwitchClassifier:
    """Compact CNN scoring an LR luma patch against ``classes`` experts."""

    def __init__(self, classes=2, width=8, seed=0):
        if classes < 1:
            raise ValueError(f"classifier needs at least one class, got {classes}")
        self.classes = classes
        self.width = width
        self.graph = switch_graph(classes, width)
        self.params = self.graph.init_params(seed)

    def _batch(self, x):
        x = np.asarray(x, dtype=np.float32)
        return x[None] if x.ndim == 3 else x

    def scores(self, x):
        """``(N, K)`` class scores for a batch of ``(1, h, w)`` patches."""
        xb = self._batch(x)
        out = self.graph.forward(self.params, xb - 0.5)[self.graph.output]
        return out.reshape(xb.shape[0], self.classes)

    def route(self, x):
        """Index of the highest score per patch; ties go to the lower index."""
        return np.argmax(self.scores(x), axis=1)

    def loss_and_grads(self, x, labels):
        xb = self._batch(x)
        acts = self.graph.forward(self.params, xb - 0.5)
        out = acts[self.graph.output]
        value, g = cross_entropy(out.reshape(len(xb), self.classes), labels)
        grads, _ = self.graph.backward(self.params, acts, {self.graph.output: g.reshape(out.shape).astype(out.dtype)})
        return value, grads

    def flops(self, lr_shape=(1, 16, 16)):
        return self.graph.flops(tuple(lr_shape))

    def to_text(self):
        return f"name=switch_cnn\nclasses={self.classes}\nwidth={self.width}\n"

    def save(self, stem):
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        stem.with_suffix(".spec").write_text(self.to_text(), encoding="utf-8")
        save_weights(stem.with_suffix(".srw"), self.params)

    @classmethod
    def load(cls, stem):
        stem = Path(stem)
        for path in (stem.with_suffix(".spec"), stem.with_suffix(".srw")):
            if not path.exists():
                raise FileNotFoundError(f"missing classifier file {path}")
        values = dict(line.split("=", 1) for line in
                      stem.with_suffix(".spec").read_text(encoding="utf-8").split())
        clf = cls(int(values["classes"]), int(values["width"]))
        tensors = load_weights(stem.with_suffix(".srw"))
        if set(tensors) != set(clf.params):
            raise ValueError(f"classifier weights {stem}.srw do not match its spec")
        clf.params = tensors
        return clf


def accuracy(classifier, x, labels):
    labels = np.asarray(labels)
    if labels.size == 0:
        return float("nan")
    return float(np.mean(classifier.route(x) == labels))


def train_switch(classifier, x, labels, epochs, lr, seed=0, val=None, momentum=0.9, batch_size=16,
                 clip_norm=CLIP_NORM):
    """Cross-entropy training of the switch on LR patches.

    ``val`` is an optional ``(x_val, labels_val)`` held-out pair; the returned
    trace holds its accuracy after each epoch (training accuracy if omitted).
    Gradients are clipped to a global norm of ``clip_norm`` before each step.
    """
    x = np.asarray(x, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    present = np.unique(labels)
    if present.size < 2:
        raise ValueError(f"switch training needs at least two classes, got {present.tolist()}")
    if present.max() >= classifier.classes or present.min() < 0:
        raise ValueError(f"labels {present.tolist()} out of range for {classifier.classes} classes")
    rng = np.random.default_rng(seed)
    opt = SGD(lr, momentum)
    trace = []
    for _ in range(epochs):
        order = rng.permutation(len(x))
        for start in range(0, len(x), batch_size):
            idx = order[start : start + batch_size]
            _, grads = classifier.loss_and_grads(x[idx], labels[idx])
            clip_gradients(grads, clip_norm)
            opt.step(classifier.params, grads)
        trace.append(accuracy(classifier, *(val if val is not None else (x, labels))))
    return classifier, trace
