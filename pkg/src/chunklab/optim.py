"""AdamW with decoupled weight decay, operating on plain numpy parameter dicts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tape import NonFiniteError

__all__ = ["AdamWState", "adamw_step"]


@dataclass
class AdamWState:
    """Per-parameter moment estimates plus the shared hyperparameters."""

    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamWState) -> None:
    """One in-place update with bias correction and decoupled weight decay."""
    state.step += 1
    b1, b2 = state.betas
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"adamw_step: gradient shape {g.shape} != param shape {p.shape} for '{name}'")
        if not np.isfinite(g).all():
            raise NonFiniteError(f"non-finite gradient for '{name}'")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        p -= state.lr * (update + state.weight_decay * p)
