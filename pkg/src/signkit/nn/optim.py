"""Adam optimizer with a step-decay learning-rate schedule."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError


def lr_at_epoch(lr0, epoch, decay_factor=0.1, decay_every=50):
    """Piecewise-constant schedule: lr0 * decay_factor ** (epoch // decay_every)."""
    return lr0 * decay_factor ** (epoch // decay_every)


@dataclass
class AdamState:
    """Bias-corrected Adam moments, keyed by parameter name."""

    lr0: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay_factor: float = 0.1
    decay_every: int = 50
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def lr(self, epoch):
        return lr_at_epoch(self.lr0, epoch, self.decay_factor, self.decay_every)


def adam_step(params, grads, state: AdamState, epoch=0):
    """One in-place Adam update of every named parameter; returns params.

    Moments are created lazily and must keep matching parameter shapes.
    """
    state.step += 1
    t = state.step
    lr = state.lr(epoch)
    b1, b2, eps = state.beta1, state.beta2, state.eps
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(
                f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}"
            )
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        if m.shape != p.shape:
            raise ShapeError(f"stale moment shape for {name!r}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        mhat = m / bc1
        vhat = v / bc2
        p -= lr * mhat / (np.sqrt(vhat) + eps)
    return params
