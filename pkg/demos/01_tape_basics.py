#!/usr/bin/env python3
"""Tour of the dense-array tape: build a graph, run backward, check a gradient.

The tape records every operation on watched arrays; backward replays the
records in reverse and sums gradients over consumers. A few gradient-shaping
primitives matter for chunking models: stop_gradient (forward identity, zero
backward), ste_one (all-ones forward, straight-through backward), and the
confidence-weighted moving average ema_scan.
"""

import numpy as np

from chunklab import tape
from chunklab.gradcheck import finite_difference_gradient, max_relative_error
from chunklab.tape import Tape

gen = np.random.default_rng(0)

# --- a small differentiable computation ------------------------------------
t = Tape()
x = t.leaf(gen.standard_normal((6, 3)))
W = t.leaf(gen.standard_normal((3, 3)))

h = tape.sigmoid(tape.matmul(x, W))
c = tape.clamp(tape.matvec(h, tape.constant([0.5, -0.2, 0.8])), 0.05, 0.95)
out = tape.ema_scan(h, c)
loss = tape.mse(out, tape.constant(np.zeros((6, 3))))
t.backward(loss)

print(f"loss = {loss.item():.4f}")
print(f"dL/dW =\n{np.round(W.grad, 4)}")

# --- the same gradient from central finite differences ----------------------
def rebuild(x_raw, W_raw):
    t2 = Tape()
    x2, W2 = t2.leaf(x_raw), t2.leaf(W_raw)
    h2 = tape.sigmoid(tape.matmul(x2, W2))
    c2 = tape.clamp(tape.matvec(h2, tape.constant([0.5, -0.2, 0.8])), 0.05, 0.95)
    return tape.mse(tape.ema_scan(h2, c2), tape.constant(np.zeros((6, 3)))).item()

fd = finite_difference_gradient(rebuild, [x.data, W.data], 1)
print(f"max relative error vs finite differences: {max_relative_error(W.grad, fd):.2e}")

# --- gradient shaping --------------------------------------------------------
t3 = Tape()
v = t3.leaf(np.array([1.0, 2.0, 3.0]))
frozen = tape.stop_gradient(v)
t3.backward(tape.sum_all(frozen * v))
print(f"\nd sum(sg(v) * v) / dv = {v.grad}   (the frozen copy, not 2v)")

t4 = Tape()
conf = t4.leaf(np.array([0.9, 0.6, 0.8]))
ones = tape.ste_one(conf)
print(f"ste_one forward: {ones.data}")
t4.backward(tape.sum_all(ones * tape.constant([5.0, -1.0, 2.0])))
print(f"straight-through gradient into the confidences: {conf.grad}")
