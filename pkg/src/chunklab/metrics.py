"""Boundary-quality statistics over (surprisal, boundary-mask) traces.

A trace pairs a boundary indicator sequence b with a hardness signal
h_t = s_{t+1}, the surprisal (in nats) of the position predicted from t.
The statistics cover enrichment of hardness at boundaries (with a
rate-matched circular-shift null), spacing regularity (normalized gap
entropy), boundary-rate drift (CUSUM range), short-range dependence
(Wald-Wolfowitz runs z-score), empirical compression, and the mean
boundary surprisal in bits.

All accumulation here is in float64. Undefined statistics (degenerate
inputs) are reported as None and excluded from aggregation with a count.

Note on the runs z-score sign: the z statistic is (R - mu_R) / sigma_R as
written, under which clustering (fewer, longer runs) gives R < mu_R and
hence a *negative* z. Published summaries sometimes describe large positive
values as clustering; we implement the formula, not the prose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import SeededRng

__all__ = [
    "Trace",
    "MetricsReport",
    "enrichment",
    "enrichment_null",
    "gap_entropy",
    "cusum_range",
    "runs_z",
    "compression",
    "boundary_mean_surprisal_bits",
    "compute_report",
    "aggregate",
    "CSV_COLUMNS",
]

_SIGMA_FLOOR = 1e-12

CSV_COLUMNS = ["id", "T", "K", "C_emp", "B", "Z_B", "H_g", "R_cusum", "Z_runs", "bpb0"]


@dataclass
class Trace:
    """Aligned per-sequence arrays of next-position surprisal and boundaries.

    ``h`` may be one entry shorter than ``b`` when the final position's
    surprisal is absent (no next target); hardness-based statistics then use
    only the first len(h) positions, while mask-only statistics use all of b.
    """

    id: str
    h: np.ndarray
    b: np.ndarray
    domain: str | None = None

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=np.float64)
        self.b = np.asarray(self.b)
        if self.b.ndim != 1 or not np.isin(self.b, (0, 1)).all():
            raise ValueError(f"trace {self.id!r}: b must be a 1-d 0/1 array")
        self.b = self.b.astype(np.uint8)
        if self.h.ndim != 1 or self.h.shape[0] not in (self.b.shape[0], self.b.shape[0] - 1):
            raise ValueError(f"trace {self.id!r}: h must have length T or T-1")
        if not np.isfinite(self.h).all() or (self.h < 0).any():
            raise ValueError(f"trace {self.id!r}: h must be finite and >= 0")
        if self.b.sum() < 1:
            raise ValueError(f"trace {self.id!r}: need at least one boundary")

    @property
    def T(self) -> int:
        return int(self.b.shape[0])

    def hardness_view(self) -> tuple[np.ndarray, np.ndarray]:
        """(h, b) truncated to the positions where hardness is present."""
        n = self.h.shape[0]
        return self.h, self.b[:n]


@dataclass
class MetricsReport:
    """One row of boundary statistics; None marks an undefined value."""

    id: str
    T: int
    K: int
    C_emp: float
    B: float | None
    Z_B: float | None
    H_g: float | None
    R_cusum: float
    Z_runs: float | None
    bpb0: float | None
    undefined_counts: dict[str, int] | None = None

    def csv_row(self) -> list[str]:
        vals = [self.id, self.T, self.K, self.C_emp, self.B, self.Z_B, self.H_g, self.R_cusum, self.Z_runs, self.bpb0]
        return ["" if v is None else (v if isinstance(v, str) else repr(v) if isinstance(v, float) else str(v)) for v in vals]


def enrichment(trace: Trace) -> float:
    """Boundary enrichment B: mean hardness at boundaries over mean hardness.

    B > 1 means boundaries preferentially sit on high-hardness positions.
    Errors on all-zero hardness or zero boundaries.
    """
    h, b = trace.hardness_view()
    total = h.sum()
    k = b.sum()
    if total <= 0:
        raise ValueError("enrichment undefined for all-zero hardness")
    if k < 1:
        raise ValueError("enrichment needs a boundary within the hardness span")
    return float((h[b == 1].mean()) / (total / h.shape[0]))


def _rotation_means(h: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Mean hardness at boundaries for every circular rotation of b.

    Entry r is (1/K) sum_t h_t b_{(t - r) mod T}, computed for all r at once
    via FFT circular cross-correlation.
    """
    T = h.shape[0]
    fh = np.fft.rfft(h)
    fb = np.fft.rfft(b.astype(np.float64))
    cross = np.fft.irfft(fh * np.conj(fb), n=T)
    return cross / b.sum()


def enrichment_null(
    trace: Trace,
    mode: str = "exact",
    shifts: int = 512,
    seed: int = 0,
) -> tuple[float, float, float | None]:
    """Null moments and z-score of B under rate-matched circular shifts.

    The null preserves the boundary pattern exactly and rotates it against
    the hardness signal; exact mode enumerates all T-1 nonzero rotations,
    Monte Carlo mode samples ``shifts`` uniform nonzero rotations. Returns
    (mu_null, sigma_null, Z_B) with Z_B None when sigma_null < 1e-12.
    """
    h, b = trace.hardness_view()
    T = h.shape[0]
    if T < 3:
        raise ValueError("null requires at least 3 positions")
    mean_h = h.mean()
    if mean_h <= 0:
        raise ValueError("enrichment undefined for all-zero hardness")
    observed = enrichment(trace)
    if mode == "exact":
        ratios = _rotation_means(h, b) / mean_h
        null = np.delete(ratios, 0)
    elif mode == "monte_carlo":
        gen = SeededRng(seed).next_generator()
        offs = gen.integers(1, T, size=shifts)
        pos = np.flatnonzero(b)
        null = np.empty(shifts, dtype=np.float64)
        step = max(1, int(4e6 // max(1, pos.size)))
        for i in range(0, shifts, step):
            chunk = offs[i : i + step]
            idx = (pos[None, :] + chunk[:, None]) % T
            null[i : i + chunk.size] = h[idx].mean(axis=1) / mean_h
    else:
        raise ValueError(f"unknown null mode {mode!r}")
    mu = float(null.mean())
    sigma = float(null.std())
    if sigma < _SIGMA_FLOOR:
        return mu, sigma, None
    return mu, sigma, (observed - mu) / sigma


def _gaps(b: np.ndarray) -> np.ndarray:
    pos = np.flatnonzero(b)
    if pos.size < 2:
        raise ValueError("need at least two boundaries to form gaps")
    return np.diff(pos)


def gap_entropy(b: np.ndarray) -> float:
    """Normalized entropy of inter-boundary gap lengths, in [0, 1].

    Normalization is by log of the number of distinct gap values; a single
    distinct gap (perfectly periodic spacing) is defined as 0.
    """
    gaps = _gaps(np.asarray(b))
    _, counts = np.unique(gaps, return_counts=True)
    if counts.size == 1:
        return 0.0
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum() / math.log(counts.size))


def cusum_range(b: np.ndarray) -> float:
    """Range of the mean-centered cumulative boundary sum (S_0 = 0 included)."""
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] < 1:
        raise ValueError("empty boundary sequence")
    s = np.concatenate([[0.0], np.cumsum(b - b.mean())])
    return float(s.max() - s.min())


def runs_z(b: np.ndarray) -> float | None:
    """Wald-Wolfowitz runs z-score; None for all-zero/all-one sequences.

    R counts maximal blocks of identical values; under an i.i.d. Bernoulli
    null with the same marginal, mu_R = 2 n1 n0 / n + 1 and
    sigma_R^2 = (mu_R - 1)(mu_R - 2) / (n - 1).
    """
    b = np.asarray(b)
    n = b.shape[0]
    n1 = int(b.sum())
    n0 = n - n1
    if n0 < 1 or n1 < 1:
        return None
    runs = 1 + int((b[1:] != b[:-1]).sum())
    mu = 2.0 * n1 * n0 / n + 1.0
    var = (mu - 1.0) * (mu - 2.0) / (n - 1.0)
    if var < _SIGMA_FLOOR:
        return None
    return float((runs - mu) / math.sqrt(var))


def compression(b: np.ndarray) -> float:
    """Empirical compression rate C_emp = T / (number of boundaries)."""
    b = np.asarray(b)
    k = int(b.sum())
    if k < 1:
        raise ValueError("compression undefined with zero boundaries")
    return b.shape[0] / k


def boundary_mean_surprisal_bits(trace: Trace) -> float:
    """Mean next-position surprisal at chunk starts, converted to bits."""
    h, b = trace.hardness_view()
    if b.sum() < 1:
        raise ValueError("no boundary within the hardness span")
    return float(h[b == 1].mean() / math.log(2.0))


def compute_report(
    trace: Trace,
    null_mode: str = "exact",
    mc_shifts: int = 512,
    seed: int = 0,
) -> MetricsReport:
    """All statistics for one trace, with undefined values flagged as None."""
    h, bh = trace.hardness_view()
    b = trace.b
    B = Z_B = None
    if h.sum() > 0 and bh.sum() >= 1:
        B = enrichment(trace)
        if trace.h.shape[0] >= 3:
            _, _, Z_B = enrichment_null(trace, mode=null_mode, shifts=mc_shifts, seed=seed)
    pos = np.flatnonzero(b)
    H_g = gap_entropy(b) if pos.size >= 2 else None
    bpb0 = boundary_mean_surprisal_bits(trace) if bh.sum() >= 1 else None
    return MetricsReport(
        id=trace.id,
        T=trace.T,
        K=int(b.sum()),
        C_emp=compression(b),
        B=B,
        Z_B=Z_B,
        H_g=H_g,
        R_cusum=cusum_range(b),
        Z_runs=runs_z(b),
        bpb0=bpb0,
    )


_AGG_FIELDS = ["C_emp", "B", "Z_B", "H_g", "R_cusum", "Z_runs", "bpb0"]


def aggregate(reports: list[MetricsReport], agg_id: str = "AGGREGATE") -> MetricsReport:
    """Length-weighted mean of each defined field across reports.

    Undefined (None) fields are excluded from their field's mean; the number
    of exclusions per field is recorded in ``undefined_counts``.
    """
    if not reports:
        raise ValueError("nothing to aggregate")
    total_T = sum(r.T for r in reports)
    total_K = sum(r.K for r in reports)
    out: dict[str, float | None] = {}
    undefined: dict[str, int] = {}
    for name in _AGG_FIELDS:
        pairs = [(r.T, getattr(r, name)) for r in reports]
        defined = [(w, v) for w, v in pairs if v is not None]
        undefined[name] = len(pairs) - len(defined)
        if not defined:
            out[name] = None
            continue
        wsum = sum(w for w, _ in defined)
        out[name] = sum(w * v for w, v in defined) / wsum
    return MetricsReport(
        id=agg_id,
        T=total_T,
        K=total_K,
        C_emp=out["C_emp"],
        B=out["B"],
        Z_B=out["Z_B"],
        H_g=out["H_g"],
        R_cusum=out["R_cusum"],
        Z_runs=out["Z_runs"],
        bpb0=out["bpb0"],
        undefined_counts=undefined,
    )
