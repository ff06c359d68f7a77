"""Central finite-difference gradient verification.

The checker perturbs raw numpy inputs and rebuilds the computation from
scratch on a fresh tape each time, so it is independent of the reverse-mode
machinery it validates. All checks run in float64.

Two comparison modes: ``entry`` takes the worst per-element relative error
(used for single ops, where h=1e-3 truncation is negligible); ``norm``
compares whole gradient vectors per input, ||ad - fd|| / max(||ad||, ||fd||)
(used for deep composites, where per-element differences at magnitudes far
below the gradient norm are dominated by the probe's own O(h^2) truncation).
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tape import DenseArray, Tape

__all__ = ["finite_difference_gradient", "max_relative_error", "norm_relative_error", "check_gradients"]


def finite_difference_gradient(
    f: Callable[..., float], arrays: list[np.ndarray], index: int, h: float = 1e-3
) -> np.ndarray:
    """Central-difference gradient of ``f(*arrays)`` w.r.t. ``arrays[index]``."""
    base = [np.array(a, dtype=np.float64) for a in arrays]
    target = base[index]
    grad = np.zeros_like(target)
    flat = target.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(*base)
        flat[i] = orig - h
        fm = f(*base)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def max_relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    """Largest elementwise |a-b| / max(|a|, |b|, floor)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / denom).max()) if a.size else 0.0


def norm_relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-9) -> float:
    """||a - b|| / max(||a||, ||b||, floor) over flattened arrays."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), floor)
    return float(np.linalg.norm(a - b)) / denom


def check_gradients(
    build: Callable[[Tape, list[DenseArray]], DenseArray],
    arrays: list[np.ndarray],
    h: float = 1e-3,
    tol: float = 1e-4,
    mode: str = "entry",
) -> float:
    """Compare reverse-mode gradients of a scalar graph against finite differences.

    ``build`` receives a fresh tape and the inputs as differentiable leaves and
    must return the scalar output. Returns the worst relative error over all
    inputs; raises AssertionError above ``tol``.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    tape = Tape()
    leaves = [tape.leaf(a) for a in arrays]
    out = build(tape, leaves)
    tape.backward(out)

    def scalar_f(*raw: np.ndarray) -> float:
        t = Tape()
        ls = [t.leaf(a) for a in raw]
        return build(t, ls).item()

    compare = max_relative_error if mode == "entry" else norm_relative_error
    worst = 0.0
    for i, leaf in enumerate(leaves):
        ad = leaf.grad if leaf.grad is not None else np.zeros_like(arrays[i])
        fd = finite_difference_gradient(scalar_f, arrays, i, h=h)
        worst = max(worst, compare(ad, fd))
    if worst >= tol:
        raise AssertionError(f"gradient mismatch: max relative error {worst:.3e} >= {tol:.1e}")
    return worst
