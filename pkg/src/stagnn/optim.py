"""Adam with decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import DiffNode
from .errors import ShapeError


@dataclass
class AdamState:
    """Per-parameter moment estimates and step counter.

    Weight decay is decoupled: theta <- theta - lr * wd * theta is applied
    before the moment update, and only to parameters named in decay_names
    (weight matrices; gain/gate/bias parameters are left undecayed).
    """

    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    decay_names: frozenset[str] = frozenset()
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: dict[str, DiffNode]) -> None:
    """One update using each parameter's accumulated grad."""
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, p in params.items():
        g = p.grad
        if g is None:
            raise ShapeError(f"parameter {name!r} has no gradient")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.value)
            state.v[name] = np.zeros_like(p.value)
        if g.shape != state.m[name].shape:
            raise ShapeError(
                f"gradient shape {g.shape} does not match moment shape "
                f"{state.m[name].shape} for {name!r}")

        if state.weight_decay and name in state.decay_names:
            p.value *= 1.0 - state.lr * state.weight_decay

        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.value -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
