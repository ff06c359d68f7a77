#!/usr/bin/env python3
"""The boundary-statistics toolkit on three contrasting traces.

A trace pairs a boundary mask with next-position surprisal (nats). The
enrichment score B asks whether boundaries sit on hard positions; its
significance comes from a rate-matched circular-shift null that keeps the
boundary pattern intact and only rotates it against the hardness signal.
Spacing structure is summarized by gap entropy, boundary-rate drift by the
CUSUM range, and short-range dependence by the runs z-score.
"""

import numpy as np

from chunklab.metrics import Trace, compute_report
from chunklab.rng import SeededRng

gen = SeededRng(7).next_generator()
T = 4096

# 1. fixed-stride boundaries, hardness independent of position
b_eq = np.zeros(T, dtype=np.uint8)
b_eq[::5] = 1
equal = Trace(id="equal-size", h=gen.exponential(1.0, T), b=b_eq)

# 2. random boundaries placed independently of an i.i.d. hardness signal
b_rand = (gen.random(T) < 0.2).astype(np.uint8)
b_rand[0] = 1
random_tr = Trace(id="random", h=gen.exponential(1.0, T), b=b_rand)

# 3. hardness-aligned boundaries: a bump wherever a boundary sits
h = gen.random(T)
b_al = (gen.random(T) < 0.2).astype(np.uint8)
b_al[0] = 1
h[b_al == 1] += 0.8
aligned = Trace(id="aligned", h=h, b=b_al)

print(f"{'trace':>12} {'C_emp':>7} {'B':>7} {'Z_B':>8} {'H_g':>6} {'R_cusum':>8} {'Z_runs':>8} {'bpb0':>7}")
for tr in (equal, random_tr, aligned):
    r = compute_report(tr, null_mode="exact")
    z_b = "n/a" if r.Z_B is None else f"{r.Z_B:8.2f}"
    z_r = "n/a" if r.Z_runs is None else f"{r.Z_runs:8.2f}"
    print(f"{r.id:>12} {r.C_emp:7.3f} {r.B:7.3f} {z_b:>8} {r.H_g:6.3f} {r.R_cusum:8.2f} {z_r:>8} {r.bpb0:7.3f}")

print("""
readings:
  equal-size: B ~ 1 (boundaries ignore hardness), H_g = 0 (perfectly periodic),
              runs z far positive (rigid persistence relative to an i.i.d. null)
  random:     everything near its null value
  aligned:    B > 1 with a strongly significant Z_B under the circular-shift null
""")
