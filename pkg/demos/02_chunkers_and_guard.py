#!/usr/bin/env python3
"""The two boundary scorers and the compression cap.

The cosine scorer measures dissimilarity between adjacent projected
positions: at random initialization in high dimension the scores pile up
around 0.5, which delays learning but also tempers early collapse. The
linear-sigmoid scorer is free of that bias: with zero-initialized weights it
starts at exactly 0.5 everywhere, so strict thresholding yields a single
boundary until the weights move -- the degenerate start the minimum-boundary
guard (top-k score promotion, cap C_max) protects against.
"""

import numpy as np

from chunklab import tape
from chunklab.chunker import (
    CosineChunkerParams,
    SigmoidChunkerParams,
    confidences,
    cosine_scores,
    enforce_min_boundaries,
    equal_size_boundaries,
    sigmoid_scores,
    threshold_boundaries,
)
from chunklab.rng import SeededRng

gen = SeededRng(0).next_generator()

# --- cosine concentration near 0.5 at random init ---------------------------
d_h = 256
xE = tape.constant(gen.standard_normal((5000, d_h)))
params = CosineChunkerParams.init(d_h, SeededRng(1))
sc = cosine_scores(xE, tape.constant(params.W_q), tape.constant(params.W_k))
print(f"cosine scores at random init: mean |p - 0.5| = {np.abs(sc.p.data[1:] - 0.5).mean():.4f}")
print(f"  -> boundaries from thresholding: {threshold_boundaries(sc).K} of 5000")

# --- sigmoid all-or-nothing start -------------------------------------------
T = 64
xE_small = tape.constant(gen.standard_normal((T, 32)))
sc0 = sigmoid_scores(xE_small, tape.constant(np.zeros(32)), tape.constant(np.asarray(0.0)))
mask0 = threshold_boundaries(sc0)
print(f"\nzero-init sigmoid: scores {sc0.p.data[:4]} ... -> {mask0.K} boundary (overcompression)")

guarded = enforce_min_boundaries(sc0, mask0, C_max=8.0)
print(f"after the guard with C_max = 8: {guarded.K} boundaries, C_emp = {T / guarded.K:.1f}")

# --- confidences --------------------------------------------------------------
p = tape.constant(np.array([1.0, 0.9, 0.2, 0.5, 0.65]))
from chunklab.chunker import BoundaryScores

conf = confidences(BoundaryScores(p))
print(f"\nscores      {p.data}")
print(f"confidences {conf.c.data}   (c = max(p, 1 - p))")

# --- the fixed-stride baseline ------------------------------------------------
mask = equal_size_boundaries(20, 5)
print(f"\nequal-size baseline, T=20, C=5: boundaries at positions {np.flatnonzero(mask.b) + 1}")
