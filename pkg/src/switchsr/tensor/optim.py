import numpy as np


class SGD:
    """SGD with heavy-ball momentum.

    The update is ``v = momentum * v + g; w -= lr * v``. Momentum buffers
    live on the optimizer, so one instance must serve one training loop.
    """

    def __init__(self, lr, momentum=0.0):
        if lr < 0:
            raise ValueError(f"learning rate must be >= 0, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {momentum}")
        self.lr = lr
        self.momentum = momentum
        self.velocity = {}

    def step(self, params, grads):
        for name, g in grads.items():
            v = self.velocity.get(name)
            if v is None:
                v = np.zeros_like(params[name])
            v = self.momentum * v + g
            self.velocity[name] = v
            params[name] -= (self.lr * v).astype(params[name].dtype, copy=False)
        return params


def sgd_step(weights, grads, learning_rate, momentum=0.0, buffer=None):
    """Functional single update; returns ``(new_weights, new_buffer)``."""
    if learning_rate < 0:
        raise ValueError(f"learning rate must be >= 0, got {learning_rate}")
    if not 0.0 <= momentum < 1.0:
        raise ValueError(f"momentum must lie in [0, 1), got {momentum}")
    weights = np.asarray(weights, dtype=float)
    grads = np.asarray(grads, dtype=float)
    buffer = np.zeros_like(weights) if buffer is None else np.asarray(buffer, dtype=float)
    buffer = momentum * buffer + grads
    return weights - learning_rate * buffer, buffer
