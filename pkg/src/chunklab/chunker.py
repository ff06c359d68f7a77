"""Boundary scores, indicators, and confidences.

Two learned parameterizations produce per-position boundary scores from
encoder states: a cosine-dissimilarity score over adjacent projected
positions, and a per-position linear-sigmoid score. Both force the first
position to be a boundary (p_1 = 1). Thresholding is strict (> 0.5) and the
confidence of a score is max(p, 1 - p).

A minimum-boundary guard promotes the highest-scoring non-boundary
positions until the mask reaches ceil(T / C_max) boundaries, capping the
empirical compression rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tape
from .rng import SeededRng
from .tape import DenseArray

__all__ = [
    "BoundaryScores",
    "BoundaryMask",
    "Confidence",
    "CosineChunkerParams",
    "SigmoidChunkerParams",
    "cosine_scores",
    "sigmoid_scores",
    "threshold_boundaries",
    "confidences",
    "equal_size_boundaries",
    "enforce_min_boundaries",
]

_NORM_EPS = 1e-8


@dataclass
class BoundaryScores:
    """Per-position boundary scores p in [0, 1] with p_1 = 1 exactly."""

    p: DenseArray

    def __post_init__(self):
        if self.p.data.ndim != 1:
            raise ValueError("boundary scores must be 1-d")
        if self.p.data[0] != 1.0:
            raise ValueError("boundary scores must have p_1 = 1")
        if (self.p.data < 0).any() or (self.p.data > 1).any():
            raise ValueError("boundary scores must lie in [0, 1]")


@dataclass
class BoundaryMask:
    """0/1 boundary indicators with b_1 = 1 and at least one boundary."""

    b: np.ndarray

    def __post_init__(self):
        self.b = np.asarray(self.b)
        if self.b.ndim != 1 or not np.isin(self.b, (0, 1)).all():
            raise ValueError("boundary mask must be a 1-d 0/1 array")
        self.b = self.b.astype(np.uint8)
        if self.b[0] != 1:
            raise ValueError("boundary mask must have b_1 = 1")

    @property
    def K(self) -> int:
        return int(self.b.sum())

    @property
    def T(self) -> int:
        return int(self.b.shape[0])


@dataclass
class Confidence:
    """Per-position confidences c = max(p, 1 - p), in [0.5, 1] with c_1 = 1."""

    c: DenseArray

    def __post_init__(self):
        d = self.c.data
        if d.ndim != 1 or d[0] != 1.0 or (d < 0.5).any() or (d > 1).any():
            raise ValueError("confidences must be 1-d in [0.5, 1] with c_1 = 1")


@dataclass
class CosineChunkerParams:
    """Square query/key projections for the adjacent-cosine score."""

    W_q: np.ndarray
    W_k: np.ndarray

    @classmethod
    def init(cls, d_h: int, rng: SeededRng, std: float = 0.02) -> "CosineChunkerParams":
        gen = rng.next_generator()
        return cls(
            W_q=(std * gen.standard_normal((d_h, d_h))).astype(np.float32),
            W_k=(std * gen.standard_normal((d_h, d_h))).astype(np.float32),
        )


@dataclass
class SigmoidChunkerParams:
    """Linear projection + bias for the per-position sigmoid score.

    Weights start Gaussian with std 0.02 and the bias at 0, so initial scores
    sit at 0.5 and thresholding is driven purely by the (small) projection.
    """

    w: np.ndarray
    bias: float | np.ndarray

    @classmethod
    def init(cls, d_h: int, rng: SeededRng, std: float = 0.02) -> "SigmoidChunkerParams":
        gen = rng.next_generator()
        return cls(
            w=(std * gen.standard_normal(d_h)).astype(np.float32),
            bias=np.zeros((), dtype=np.float32),
        )


def cosine_scores(xE: DenseArray, W_q: DenseArray, W_k: DenseArray) -> BoundaryScores:
    """Adjacent-dissimilarity scores p_i = (1 - cos(q_i, k_{i-1})) / 2, p_1 = 1.

    Queries and keys are linear projections of the encoder states; the norms
    in the denominator are guarded at the 1e-8 scale so zero rows stay finite
    and differentiable. Scores land in [0, 1]: 0 for parallel neighbours,
    0.5 for orthogonal ones, 1 for antiparallel ones.
    """
    T = xE.data.shape[0]
    one = tape.constant([1.0], dtype=xE.data.dtype)
    if T == 1:
        return BoundaryScores(tape.concat([one]))
    q = tape.matmul(xE, W_q)
    k = tape.matmul(xE, W_k)
    q_cur = tape.rows(q, 1, T)
    k_prev = tape.rows(k, 0, T - 1)
    num = tape.row_dot(q_cur, k_prev)
    qn = tape.sqrt(tape.row_dot(q_cur, q_cur) + _NORM_EPS**2)
    kn = tape.sqrt(tape.row_dot(k_prev, k_prev) + _NORM_EPS**2)
    cos = num / (qn * kn)
    # Float32 rounding can push |cos| a hair past 1; pin scores to [0, 1].
    p_tail = tape.clamp(0.5 * (1.0 - cos), 0.0, 1.0)
    return BoundaryScores(tape.concat([one, p_tail]))


def sigmoid_scores(xE: DenseArray, w: DenseArray, bias: DenseArray) -> BoundaryScores:
    """Linear-sigmoid scores p_i = sigmoid(w . xE_i + bias) with p_1 forced to 1."""
    T = xE.data.shape[0]
    one = tape.constant([1.0], dtype=xE.data.dtype)
    if T == 1:
        return BoundaryScores(tape.concat([one]))
    logits = tape.matvec(tape.rows(xE, 1, T), w)
    p_tail = tape.sigmoid(logits + tape.broadcast_scalar(bias, T - 1))
    return BoundaryScores(tape.concat([one, p_tail]))


def threshold_boundaries(scores: BoundaryScores) -> BoundaryMask:
    """Strict thresholding b_i = 1[p_i > 0.5]; p_1 = 1 guarantees b_1 = 1."""
    return BoundaryMask((scores.p.data > 0.5).astype(np.uint8))


def confidences(scores: BoundaryScores) -> Confidence:
    """c_i = max(p_i, 1 - p_i); the tie at p = 0.5 takes the p-branch gradient."""
    p = scores.p
    branch = tape.constant(p.data >= 0.5, dtype=p.data.dtype)
    c = branch * p + (1.0 - branch) * (1.0 - p)
    return Confidence(c)


def equal_size_boundaries(T: int, C: int) -> BoundaryMask:
    """Fixed-stride baseline: a boundary every C positions, starting at 1."""
    if C < 1:
        raise ValueError("equal-size stride must be >= 1")
    b = np.zeros(T, dtype=np.uint8)
    b[::C] = 1
    return BoundaryMask(b)


def enforce_min_boundaries(scores: BoundaryScores, mask: BoundaryMask, C_max: float) -> BoundaryMask:
    """Cap compression at C_max by promoting the best-scored non-boundaries.

    If the mask has fewer than ceil(T / C_max) boundaries, the non-boundary
    positions with the highest scores are promoted (ties resolved toward the
    lower index) until the minimum is met; otherwise the mask is returned
    unchanged. The scores themselves are untouched.
    """
    if C_max <= 1:
        raise ValueError("C_max must be > 1")
    T = mask.T
    k_min = math.ceil(T / C_max)
    deficit = k_min - mask.K
    if deficit <= 0:
        return mask
    p = scores.p.data
    candidates = np.flatnonzero(mask.b == 0)
    order = np.argsort(-p[candidates], kind="stable")
    promoted = candidates[order[:deficit]]
    b = mask.b.copy()
    b[promoted] = 1
    return BoundaryMask(b)
