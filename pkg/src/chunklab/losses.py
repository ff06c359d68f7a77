"""Auxiliary losses: compression control and confidence-alignment.

The ratio loss drives the realized boundary rate toward 1/N using both the
realized mask (no gradient) and the soft scores (gradient path). The
confidence-alignment boundary (CAB) loss pulls each boundary score toward
one minus the model's (stop-gradient) probability of the next target.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import tape
from .chunker import BoundaryMask, BoundaryScores
from .tape import DenseArray

__all__ = ["RatioLossConfig", "CabLossConfig", "ratio_loss", "cab_loss", "total_loss"]


@dataclass
class RatioLossConfig:
    """Target compression ratio N (> 1) and loss weight."""

    N: float = 4.0
    weight: float = 1.0

    def __post_init__(self):
        if self.N <= 1:
            raise ValueError("target compression ratio must be > 1")
        if self.weight < 0:
            raise ValueError("ratio loss weight must be >= 0")


@dataclass
class CabLossConfig:
    """CAB loss weight and the clamp epsilon applied to both arguments."""

    weight: float = 0.01
    clamp_eps: float = 1e-6

    def __post_init__(self):
        if not 0 < self.clamp_eps < 0.5:
            raise ValueError("clamp_eps must lie in (0, 0.5)")
        if self.weight < 0:
            raise ValueError("CAB loss weight must be >= 0")


def ratio_loss(scores: BoundaryScores, mask: BoundaryMask, N: float) -> DenseArray:
    """Compression-control loss N/(N-1) * ((N-1) F G + (1-F)(1-G)).

    F is the realized boundary rate mean(b) (constant), G the mean soft score
    (the only gradient path). The loss is affine in G, equals 1 at
    F = G = 1/N, and its diagonal L(f, f) is minimized exactly at f = 1/N.
    """
    if N <= 1:
        raise ValueError("target compression ratio must be > 1")
    F = float(mask.b.mean())
    G = tape.mean(scores.p)
    scale = N / (N - 1.0)
    return scale * ((N - 1.0) * F * G + (1.0 - F) * (1.0 - G))


def cab_loss(scores: BoundaryScores, p_next: DenseArray, clamp_eps: float = 1e-6) -> DenseArray:
    """Mean squared confidence-alignment residual (1 - sg[P_{t+1}] - p_t)^2.

    ``p_next[t]`` is the model's probability of the target predicted from
    position t; both arguments are clamped to [clamp_eps, 1 - clamp_eps] and
    no gradient reaches ``p_next``. The final position has no next target and
    is excluded from the mean, so sequences of length 1 are an error.
    """
    p = scores.p
    if p_next.data.shape != p.data.shape:
        raise ValueError(f"cab_loss: length mismatch {p_next.data.shape} vs {p.data.shape}")
    T = p.data.shape[0]
    if T < 2:
        raise ValueError("cab_loss needs at least one position with a next target")
    p_t = tape.clamp(tape.rows(p, 0, T - 1), clamp_eps, 1.0 - clamp_eps)
    P = tape.clamp(tape.rows(tape.stop_gradient(p_next), 0, T - 1), clamp_eps, 1.0 - clamp_eps)
    resid = 1.0 - P - p_t
    return tape.mean(resid * resid)


def total_loss(
    mse: DenseArray | float,
    ratio: DenseArray | float,
    cab: DenseArray | float,
    w_mse: float = 1.0,
    w_ratio: float = 1.0,
    w_cab: float = 0.0,
) -> DenseArray | float:
    """Weighted sum of the three terms; weights (1, 1, 0) give the synthetic objective."""
    for name, w in (("mse", w_mse), ("ratio", w_ratio), ("cab", w_cab)):
        if w < 0:
            raise ValueError(f"negative weight for {name} term")
    return w_mse * mse + w_ratio * ratio + w_cab * cab
