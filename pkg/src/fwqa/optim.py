"""Adam with bias correction and global-norm gradient clipping."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeError

ADAM_PRESETS = {
    # decay rates exactly as printed for the original experiments
    "paper": (0.1, 0.001),
    "standard": (0.9, 0.999),
}


@dataclass
class AdamState:
    lr: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def preset(cls, name: str, lr: float = 0.002, eps: float = 1e-8) -> "AdamState":
        try:
            b1, b2 = ADAM_PRESETS[name]
        except KeyError:
            raise ValueError(f"unknown Adam preset {name!r}; choose from {sorted(ADAM_PRESETS)}") from None
        return cls(lr=lr, beta1=b1, beta2=b2, eps=eps)


def _arr(x):
    return x.data if hasattr(x, "data") and not isinstance(x, np.ndarray) else x


def adam_step(params: dict, grads: dict, state: AdamState):
    """One in-place Adam update of every parameter in ``params``.

    ``params`` values are Tensors or arrays; ``grads`` maps the same names to
    arrays.  Returns ``(params, state)``.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        theta = _arr(p)
        g = np.asarray(grads[name])
        if g.shape != theta.shape:
            raise ShapeError(f"adam_step: gradient {g.shape} does not match parameter {name} {theta.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        theta -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


CLIP_SLACK = 1e-12


def global_norm(grads) -> float:
    vals = grads.values() if isinstance(grads, dict) else grads
    return float(np.sqrt(sum(float(np.sum(np.square(g))) for g in vals)))


def clip_gradients(grads, max_norm: float = 10.0):
    """Rescale all gradients jointly so their global L2 norm is at most ``max_norm``.

    Accepts a dict or a list of arrays and returns the same container type
    (new arrays; inputs are not modified).
    """
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    n = global_norm(grads)
    # a set clipped once may land an ulp above max_norm; leave it alone so
    # that clipping is idempotent
    factor = max_norm / n if n > max_norm * (1.0 + CLIP_SLACK) else None
    if isinstance(grads, dict):
        return {k: (g * factor if factor is not None else np.array(g, copy=True)) for k, g in grads.items()}
    return [g * factor if factor is not None else np.array(g, copy=True) for g in grads]
