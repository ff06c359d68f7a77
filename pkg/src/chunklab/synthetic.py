"""Piecewise-constant change-point benchmark with an oracle backbone.

Sequences carry a latent state that is constant within random segments and
jumps at Bernoulli change points; observations pass the latent through a
fixed random linear map plus Gaussian noise. A minimal causal encoder (a
single gated linear recurrence with an output map, standing in for a heavier
sequence block) featurizes the observations; the backbone is replaced by the
ground truth, read out by sub-sampling the latent sequence at predicted
boundaries. This isolates boundary placement and temporal expansion from
any backbone modeling error.

Dataset files use the SMB1 container: magic ``SMB1``, a little-endian
header ``<qqqddQ`` of (T, d_z, d_x, sigma, boundary_rate, seed), then
row-major float32 z and x, then the boundary mask bit-packed with numpy's
big-endian bit order. A JSON sidecar (same path + ``.json``) repeats the
header for human inspection.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tape
from .chunker import BoundaryMask
from .expansion import ChunkStates
from .rng import SeededRng
from .tape import DenseArray

__all__ = [
    "SynthConfig",
    "GeneratorInstance",
    "SynthSample",
    "EncoderParams",
    "sample",
    "encode",
    "oracle_subsample",
    "boundary_accuracy",
    "save_sample",
    "load_sample",
]

_MAGIC = b"SMB1"
_HEADER = struct.Struct("<qqqddQ")


@dataclass
class SynthConfig:
    """Generator shape: desk-scale defaults; the paper-scale study used
    T=2^15, d_z=256, d_x=32."""

    T: int = 4096
    d_z: int = 64
    d_x: int = 16
    boundary_rate: float = 0.25
    sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.T < 2:
            raise ValueError("need at least two positions")
        if not 0 < self.boundary_rate <= 1:
            raise ValueError("boundary rate must lie in (0, 1]")
        if self.sigma < 0:
            raise ValueError("noise scale must be >= 0")

    @classmethod
    def paper_scale(cls, **kw) -> "SynthConfig":
        kw.setdefault("T", 2**15)
        kw.setdefault("d_z", 256)
        kw.setdefault("d_x", 32)
        return cls(**kw)


class GeneratorInstance:
    """Holds the fixed random linear map W (standard-normal entries, sampled once)."""

    def __init__(self, d_z: int, d_x: int, rng: SeededRng):
        gen = rng.next_generator()
        self.W = gen.standard_normal((d_z, d_x)).astype(np.float32)

    @property
    def shape(self) -> tuple[int, int]:
        return self.W.shape


@dataclass
class SynthSample:
    """Latent sequence z, observations x, and the true boundary mask."""

    z: np.ndarray
    x: np.ndarray
    b_star: np.ndarray

    def __post_init__(self):
        if self.b_star[0] != 1:
            raise ValueError("true mask must start with a boundary")


def sample(cfg: SynthConfig, gen: GeneratorInstance, rng: SeededRng) -> SynthSample:
    """Draw one sequence: Bernoulli change points, i.i.d. segment prototypes,
    piecewise-constant latents, then noisy linear observations."""
    if gen.shape != (cfg.d_z, cfg.d_x):
        raise ValueError(f"generator shape {gen.shape} != config ({cfg.d_z}, {cfg.d_x})")
    g = rng.next_generator()
    b = (g.random(cfg.T) < cfg.boundary_rate).astype(np.uint8)
    b[0] = 1
    seg = np.cumsum(b) - 1
    K = int(seg[-1]) + 1
    prototypes = g.standard_normal((K, cfg.d_z)).astype(np.float32)
    z = prototypes[seg]
    x = z @ gen.W
    if cfg.sigma > 0:
        x = x + (cfg.sigma * g.standard_normal((cfg.T, cfg.d_x))).astype(np.float32)
    return SynthSample(z=z, x=x, b_star=b)


@dataclass
class EncoderParams:
    """Gated-recurrence encoder weights.

    g_t = sigmoid(x_t V + gate_bias); h_t = (1 - g_t) * h_{t-1} + g_t * (x_t U);
    output row t = h_t O, with h_0 = 0. Strictly causal by construction.
    """

    U: np.ndarray
    V: np.ndarray
    gate_bias: np.ndarray
    O: np.ndarray

    @classmethod
    def init(cls, d_x: int, d_h: int = 128, rng: SeededRng | None = None, dtype=np.float32) -> "EncoderParams":
        if rng is None:
            rng = SeededRng(0)
        gen = rng.next_generator()
        return cls(
            U=(0.05 * gen.standard_normal((d_x, d_h))).astype(dtype),
            V=(0.05 * gen.standard_normal((d_x, d_h))).astype(dtype),
            gate_bias=np.zeros(d_h, dtype=dtype),
            O=(gen.standard_normal((d_h, d_h)) / math.sqrt(d_h)).astype(dtype),
        )

    def as_dict(self) -> dict[str, np.ndarray]:
        return {"enc_U": self.U, "enc_V": self.V, "enc_gate_bias": self.gate_bias, "enc_O": self.O}


def encode(
    x: DenseArray, U: DenseArray, V: DenseArray, gate_bias: DenseArray, O: DenseArray
) -> DenseArray:
    """Run the gated linear recurrence over the observations; returns [T x d_h]."""
    gates = tape.sigmoid(tape.add_rowvec(tape.matmul(x, V), gate_bias))
    h = tape.gated_scan(gates, tape.matmul(x, U))
    return tape.matmul(h, O)


def oracle_subsample(z: np.ndarray, mask: BoundaryMask) -> ChunkStates:
    """Ground-truth chunk states: the latent rows at predicted boundaries.

    The latent sequence is a constant here, so no gradient flows into it.
    """
    zc = tape.constant(z, dtype=np.asarray(z).dtype)
    return ChunkStates.from_mask(tape.select_rows(zc, mask.b), mask)


def boundary_accuracy(b_hat: np.ndarray, b_star: np.ndarray) -> tuple[float, float, float, float]:
    """(accuracy, precision, recall, F1) of a predicted mask against the truth.

    Accuracy is per-position agreement; precision/recall/F1 treat boundary
    positions as the positive class.
    """
    b_hat = np.asarray(b_hat).astype(np.uint8)
    b_star = np.asarray(b_star).astype(np.uint8)
    if b_hat.shape != b_star.shape:
        raise ValueError("mask length mismatch")
    acc = float((b_hat == b_star).mean())
    tp = int(((b_hat == 1) & (b_star == 1)).sum())
    fp = int(((b_hat == 1) & (b_star == 0)).sum())
    fn = int(((b_hat == 0) & (b_star == 1)).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return acc, precision, recall, f1


def save_sample(path: str | Path, cfg: SynthConfig, s: SynthSample) -> None:
    """Write one sample as an SMB1 container plus a JSON sidecar."""
    path = Path(path)
    header = _HEADER.pack(cfg.T, cfg.d_z, cfg.d_x, cfg.sigma, cfg.boundary_rate, cfg.seed)
    packed = np.packbits(s.b_star)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(header)
        fh.write(np.ascontiguousarray(s.z, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(s.x, dtype="<f4").tobytes())
        fh.write(packed.tobytes())
    sidecar = {
        "format": "SMB1",
        "T": cfg.T,
        "d_z": cfg.d_z,
        "d_x": cfg.d_x,
        "sigma": cfg.sigma,
        "boundary_rate": cfg.boundary_rate,
        "seed": cfg.seed,
    }
    with open(path.with_name(path.name + ".json"), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_sample(path: str | Path) -> tuple[SynthConfig, SynthSample]:
    """Read an SMB1 container back into a config and sample."""
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not an SMB1 container")
    T, d_z, d_x, sigma, rate, seed = _HEADER.unpack_from(raw, 4)
    cfg = SynthConfig(T=T, d_z=d_z, d_x=d_x, boundary_rate=rate, sigma=sigma, seed=seed)
    off = 4 + _HEADER.size
    nz = T * d_z * 4
    nx = T * d_x * 4
    nb = -(-T // 8)
    if len(raw) != off + nz + nx + nb:
        raise ValueError(f"{path}: truncated container")
    z = np.frombuffer(raw, dtype="<f4", count=T * d_z, offset=off).reshape(T, d_z)
    x = np.frombuffer(raw, dtype="<f4", count=T * d_x, offset=off + nz).reshape(T, d_x)
    b = np.unpackbits(np.frombuffer(raw, dtype=np.uint8, offset=off + nz + nx))[:T]
    return cfg, SynthSample(z=z.copy(), x=x.copy(), b_star=b)
