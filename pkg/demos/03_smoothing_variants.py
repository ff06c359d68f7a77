#!/usr/bin/env python3
"""Chunk-level versus byte-level temporal-expansion smoothing.

Both variants expand K chunk states back to the full sequence. The
chunk-level one averages across chunk states first (using only the
confidences at boundary positions) and then repeats; the byte-level one
repeats first and then smooths at full resolution with every position's
confidence. The structural consequence shows up in the gradients: chunk
smoothing leaves every non-boundary confidence with exactly zero signal,
byte smoothing feeds them all.
"""

import numpy as np

from chunklab import tape
from chunklab.chunker import BoundaryMask, Confidence
from chunklab.expansion import ChunkStates, byte_smooth_expand, chunk_smooth_expand
from chunklab.tape import Tape

T, d = 12, 2
b = np.zeros(T, dtype=np.uint8)
b[[0, 4, 8]] = 1
mask = BoundaryMask(b)
y = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.5]])
print(f"boundary mask: {b}   chunk rows:\n{y}")

for label, c_vals in [("sharp (c = 1)", np.ones(T)),
                      ("soft  (c = 0.6 off-boundary)", np.where(b == 1, 1.0, 0.6))]:
    conf = Confidence.__new__(Confidence)
    conf.c = tape.constant(c_vals)
    chunks = ChunkStates.from_mask(tape.constant(y), mask)
    ch = chunk_smooth_expand(chunks, mask, conf).xb.data
    by = byte_smooth_expand(chunks, mask, conf).xb.data
    print(f"\n--- {label}")
    print(f"chunk-level smoothing, first column: {np.round(ch[:, 0], 3)}")
    print(f"byte-level  smoothing, first column: {np.round(by[:, 0], 3)}")

# --- where the confidence gradients go ---------------------------------------
target = tape.constant(np.random.default_rng(0).standard_normal((T, d)))
print("\ngradient magnitude into each confidence (loss = mse to a random target):")
for label, expand in [("chunk", chunk_smooth_expand), ("byte", byte_smooth_expand)]:
    t = Tape()
    cl = t.leaf(np.where(b == 1, 1.0, 0.7))
    conf = Confidence.__new__(Confidence)
    conf.c = cl
    out = expand(ChunkStates.from_mask(tape.constant(y), mask), mask, conf)
    t.backward(tape.mse(out.xb, target))
    print(f"  {label:5s}: {np.round(np.abs(cl.grad), 3)}")
print("(boundary positions are 1, 5, 9; chunk smoothing is silent everywhere else)")
