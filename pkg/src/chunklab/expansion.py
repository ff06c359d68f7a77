"""Temporal expansion from chunk-level states back to full resolution.

Two smoothing variants: the chunk-level one runs a confidence-weighted
moving average over the K chunk rows (using only the confidences at the
boundary positions) and then repeats, while the byte-level one repeats
first and then smooths at full length with every position's confidence.
With all confidences at 1 both coincide with plain repetition.

Fusion combines encoder features with the expanded stream, either as a
plain residual sum or with an all-ones straight-through factor that routes
extra gradient into the confidences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tape
from .chunker import BoundaryMask, Confidence
from .tape import DenseArray

__all__ = [
    "ChunkStates",
    "ExpandedStates",
    "chunk_smooth_expand",
    "byte_smooth_expand",
    "fuse_residual",
    "fuse_confidence_ste",
]


@dataclass
class ChunkStates:
    """K chunk rows plus the boundary positions T(1..K) that produced them."""

    y: DenseArray
    starts: np.ndarray

    def __post_init__(self):
        self.starts = np.asarray(self.starts, dtype=np.int64)
        if self.y.data.ndim != 2 or self.y.data.shape[0] != self.starts.shape[0]:
            raise ValueError("chunk rows and boundary positions disagree")
        if self.starts.shape[0] < 1 or self.starts[0] != 0:
            raise ValueError("first chunk must start at position 1")
        if (np.diff(self.starts) <= 0).any():
            raise ValueError("boundary positions must be strictly increasing")

    @classmethod
    def from_mask(cls, y: DenseArray, mask: BoundaryMask) -> "ChunkStates":
        return cls(y, np.flatnonzero(mask.b))

    @property
    def K(self) -> int:
        return int(self.starts.shape[0])


@dataclass
class ExpandedStates:
    """Full-resolution states: xk is plain repetition, xb the smoothed stream."""

    xk: DenseArray
    xb: DenseArray


def chunk_smooth_expand(chunks: ChunkStates, mask: BoundaryMask, conf: Confidence) -> ExpandedStates:
    """Smooth across chunk rows with boundary-position confidences, then repeat.

    ybar_i = c_{T(i)} * y_i + (1 - c_{T(i)}) * ybar_{i-1}; each ybar_i then
    fills its span. Only the K boundary-position confidences enter, so
    non-boundary confidences receive exactly zero gradient here.
    """
    if chunks.K < 1:
        raise ValueError("need at least one chunk")
    c_bnd = tape.select_rows(conf.c, mask.b)
    ybar = tape.ema_scan(chunks.y, c_bnd)
    xk = tape.repeat_rows(chunks.y, mask.b)
    xb = tape.repeat_rows(ybar, mask.b)
    return ExpandedStates(xk=xk, xb=xb)


def byte_smooth_expand(chunks: ChunkStates, mask: BoundaryMask, conf: Confidence) -> ExpandedStates:
    """Repeat chunk rows to full length, then smooth with every confidence.

    xb_i = c_i * xk_i + (1 - c_i) * xb_{i-1} over the full sequence, so every
    confidence (boundary or not) carries training signal.
    """
    if chunks.K < 1:
        raise ValueError("need at least one chunk")
    xk = tape.repeat_rows(chunks.y, mask.b)
    xb = tape.ema_scan(xk, conf.c)
    return ExpandedStates(xk=xk, xb=xb)


def fuse_residual(xE: DenseArray, xB: DenseArray) -> DenseArray:
    """Plain residual fusion: elementwise sum of the two streams."""
    return xE + xB


def fuse_confidence_ste(xE: DenseArray, xB: DenseArray, conf: Confidence) -> DenseArray:
    """Residual fusion with a straight-through confidence factor on xB.

    Forward equals ``fuse_residual`` exactly (the factor is all ones);
    backward additionally routes the row dot product of the upstream gradient
    with xB_i into c_i.
    """
    if xE.data.shape != xB.data.shape:
        raise ValueError("fuse: stream shapes differ")
    factor = tape.broadcast_col(tape.ste_one(conf.c), xB.data.shape[1])
    return xE + factor * xB
