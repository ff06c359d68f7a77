#!/usr/bin/env python3
"""The compression-control (ratio) loss and the confidence-alignment loss.

The ratio loss couples the realized boundary rate F = mean(b) (no gradient)
with the mean soft score G = mean(p) (the gradient path); its diagonal
L(f, f) bottoms out exactly at f = 1/N. The confidence-alignment loss pulls
each score toward 1 - P_next under a stop-gradient, so the model's own
next-target probabilities steer boundaries toward hard positions without
being disturbed themselves.
"""

import numpy as np

from chunklab import tape
from chunklab.chunker import BoundaryMask, BoundaryScores
from chunklab.losses import cab_loss, ratio_loss
from chunklab.tape import Tape

# --- ratio loss landscape -----------------------------------------------------
N = 4.0
grid = np.arange(1, 1000) / 1000.0
diag = N / (N - 1) * ((N - 1) * grid**2 + (1 - grid) ** 2)
print(f"ratio loss diagonal L(f, f) at N = {N}:")
for f in (0.1, 0.25, 0.5, 1.0):
    val = N / (N - 1) * ((N - 1) * f * f + (1 - f) ** 2)
    marker = "  <- minimum (f = 1/N)" if abs(f - 1 / N) < 1e-9 else ""
    print(f"  f = {f:4.2f}: L = {val:.4f}{marker}")
print(f"grid argmin: f = {grid[np.argmin(diag)]:.3f}")

# the sign of the pressure on the scores flips at the target rate
T = 400
for rate in (0.5, 0.25, 0.125):
    b = np.zeros(T, dtype=np.uint8)
    b[: int(rate * T)] = 1
    t = Tape()
    pl = t.leaf(np.full(T, 0.3))
    sc = BoundaryScores.__new__(BoundaryScores)
    sc.p = pl
    t.backward(ratio_loss(sc, BoundaryMask(b), N))
    direction = "down (fewer boundaries)" if pl.grad[0] > 0 else "up (more boundaries)"
    print(f"  realized rate {rate:5.3f}: dL/dp pushes scores {direction}")

# --- confidence-alignment loss -------------------------------------------------
print("\nconfidence-alignment: the score chases 1 - P_next")
p_next = np.array([0.95, 0.6, 0.1, 0.5])
for guess in (0.1, 0.5, 0.9):
    sc = BoundaryScores.__new__(BoundaryScores)
    sc.p = tape.constant(np.full(4, guess))
    val = cab_loss(sc, tape.constant(p_next))
    print(f"  constant p = {guess}: loss = {val.item():.4f}")
best = np.clip(1 - p_next[:-1], 1e-6, 1 - 1e-6)
print(f"per-position minimizers: {best} (the final position has no next target)")

t = Tape()
P_leaf = t.leaf(p_next)
sc = BoundaryScores.__new__(BoundaryScores)
sc.p = t.leaf(np.full(4, 0.4))
t.backward(cab_loss(sc, P_leaf))
print(f"gradient into P_next: {P_leaf.grad} (stop-gradient: none)")
