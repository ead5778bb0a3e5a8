"""RMSprop over :class:`~sketchvid.core.tensor.Parameter` objects."""
import numpy as np

from .tensor import NonFiniteError


def rmsprop_step(params, lr, decay=0.9, eps=1e-8):
    """One RMSprop update in place, using each parameter's populated gradient.

    ``square_avg <- decay * square_avg + (1 - decay) * grad**2`` then
    ``value <- value - lr * grad / (sqrt(square_avg) + eps)``.
    """
    for p in params:
        g = p.grad
        sq = decay * p.square_avg + (1.0 - decay) * g * g
        update = lr * g / (np.sqrt(sq) + eps)
        new = p.value - update
        if not np.all(np.isfinite(new)):
            raise NonFiniteError(f"non-finite RMSprop update for parameter {p.name!r}")
        p.square_avg = sq.astype(p.value.dtype, copy=False)
        p.tensor.data = new.astype(p.value.dtype, copy=False)
    return params


class RMSprop:
    def __init__(self, params, lr=1e-3, decay=0.9, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.decay = decay
        self.eps = eps

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        rmsprop_step(self.params, self.lr, self.decay, self.eps)
