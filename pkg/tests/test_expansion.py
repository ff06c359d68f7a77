"""Temporal expansion smoothing variants and fusion."""

import numpy as np
import pytest

from chunklab import tape
from chunklab.chunker import BoundaryMask, BoundaryScores, Confidence, confidences
from chunklab.expansion import (
    ChunkStates,
    byte_smooth_expand,
    chunk_smooth_expand,
    fuse_confidence_ste,
    fuse_residual,
)
from chunklab.gradcheck import check_gradients
from chunklab.tape import Tape


def _conf(c):
    return Confidence(tape.constant(np.asarray(c, dtype=np.float64)))


def _setup(seed=0, T=10, K=None, d=3):
    gen = np.random.default_rng(seed)
    b = (gen.random(T) < 0.4).astype(np.uint8)
    b[0] = 1
    mask = BoundaryMask(b)
    y = gen.standard_normal((mask.K, d))
    return mask, y, gen


def test_chunk_smooth_all_boundary_confidence_one_is_repetition():
    mask, y, gen = _setup(1)
    c = gen.uniform(0.5, 1.0, mask.T)
    c[mask.b == 1] = 1.0
    c[0] = 1.0
    chunks = ChunkStates.from_mask(tape.constant(y), mask)
    out = chunk_smooth_expand(chunks, mask, _conf(c))
    np.testing.assert_array_equal(out.xb.data, out.xk.data)
    seg = np.cumsum(mask.b) - 1
    np.testing.assert_array_equal(out.xk.data, y[seg])


def test_chunk_smooth_single_chunk_extends_first_row():
    mask = BoundaryMask(np.array([1, 0, 0, 0]))
    y = np.array([[2.0, -1.0]])
    chunks = ChunkStates.from_mask(tape.constant(y), mask)
    out = chunk_smooth_expand(chunks, mask, _conf([1.0, 0.6, 0.7, 0.9]))
    np.testing.assert_allclose(out.xb.data, np.tile(y[0], (4, 1)))


def test_chunk_smooth_finite_difference():
    gen = np.random.default_rng(2)
    T, d = 12, 3
    b = np.zeros(T, dtype=np.uint8)
    b[[0, 3, 7, 9]] = 1
    mask = BoundaryMask(b)
    y = gen.standard_normal((4, d))
    p_tail = gen.uniform(0.55, 0.95, T - 1)
    w = tape.constant(gen.standard_normal((T, d)))

    def build(t, ls):
        p = tape.concat([tape.constant([1.0]), ls[1]])
        conf = confidences(BoundaryScores(p))
        chunks = ChunkStates.from_mask(ls[0], mask)
        return tape.sum_all(chunk_smooth_expand(chunks, mask, conf).xb * w)

    check_gradients(build, [y, p_tail])


def test_byte_smooth_confidence_one_equals_repetition_and_chunk_variant():
    mask, y, _ = _setup(3)
    c = np.ones(mask.T)
    chunks = ChunkStates.from_mask(tape.constant(y), mask)
    out_b = byte_smooth_expand(chunks, mask, _conf(c))
    out_c = chunk_smooth_expand(chunks, mask, _conf(c))
    np.testing.assert_array_equal(out_b.xb.data, out_b.xk.data)
    np.testing.assert_array_equal(out_b.xb.data, out_c.xb.data)


def _conf_unchecked(c, dtype=np.float64):
    # bypass the [0.5, 1] type validation: a few cases probe the smoothing
    # recurrence with confidences outside the range max(p, 1-p) can produce
    conf = Confidence.__new__(Confidence)
    conf.c = tape.constant(np.asarray(c, dtype=dtype), dtype=dtype)
    return conf


def test_byte_smooth_zero_confidence_extends_first_row():
    mask = BoundaryMask(np.array([1, 0, 1, 0]))
    y = np.array([[1.0], [5.0]])
    c = np.array([1.0, 0.0, 0.0, 0.0])
    chunks = ChunkStates.from_mask(tape.constant(y), mask)
    out = byte_smooth_expand(chunks, mask, _conf_unchecked(c))
    np.testing.assert_allclose(out.xb.data, np.tile(y[0], (4, 1)))


def test_byte_smooth_finite_difference():
    gen = np.random.default_rng(4)
    T, d = 12, 3
    b = np.zeros(T, dtype=np.uint8)
    b[[0, 3, 7, 9]] = 1
    mask = BoundaryMask(b)
    y = gen.standard_normal((4, d))
    p_tail = gen.uniform(0.55, 0.95, T - 1)
    w = tape.constant(gen.standard_normal((T, d)))

    def build(t, ls):
        p = tape.concat([tape.constant([1.0]), ls[1]])
        conf = confidences(BoundaryScores(p))
        chunks = ChunkStates.from_mask(ls[0], mask)
        return tape.sum_all(byte_smooth_expand(chunks, mask, conf).xb * w)

    check_gradients(build, [y, p_tail])


def test_gradient_reaches_every_confidence_only_for_byte_smoothing():
    # chunk-level smoothing leaves non-boundary confidences with exactly zero
    # gradient; byte-level smoothing feeds them all (where chunk values differ)
    gen = np.random.default_rng(5)
    T, d = 10, 3
    b = np.zeros(T, dtype=np.uint8)
    b[[0, 4, 7]] = 1
    mask = BoundaryMask(b)
    y = gen.standard_normal((3, d))
    target = tape.constant(gen.standard_normal((T, d)))

    grads = {}
    for variant, fn in [("chunk", chunk_smooth_expand), ("byte", byte_smooth_expand)]:
        t = Tape()
        c_raw = gen.uniform(0.55, 0.95, T)
        c_raw[0] = 1.0
        cl = t.leaf(c_raw)
        conf = Confidence.__new__(Confidence)
        conf.c = cl
        chunks = ChunkStates.from_mask(tape.constant(y), mask)
        out = fn(chunks, mask, conf)
        t.backward(tape.mse(out.xb, target))
        grads[variant] = cl.grad.copy()

    non_boundary = mask.b == 0
    np.testing.assert_array_equal(grads["chunk"][non_boundary], 0.0)
    assert (grads["chunk"][mask.b == 1][1:] != 0).all()
    # byte smoothing feeds every non-boundary confidence where the running
    # smoothed state differs from the current chunk value; inside the first
    # chunk they coincide, so the signal is exactly zero there for both
    second_chunk_start = np.flatnonzero(mask.b)[1]
    differing = non_boundary & (np.arange(mask.T) > second_chunk_start)
    first_chunk_interior = non_boundary & (np.arange(mask.T) < second_chunk_start)
    assert (np.abs(grads["byte"][differing]) > 0).all()
    np.testing.assert_array_equal(grads["byte"][first_chunk_interior], 0.0)


def test_byte_smooth_causality():
    # position i depends only on chunks whose span starts at or before i
    gen = np.random.default_rng(6)
    T, d = 14, 2
    b = np.zeros(T, dtype=np.uint8)
    b[[0, 5, 9]] = 1
    mask = BoundaryMask(b)
    y = gen.standard_normal((3, d))
    c = gen.uniform(0.5, 1.0, T)
    c[0] = 1.0
    base = byte_smooth_expand(ChunkStates.from_mask(tape.constant(y), mask), mask, _conf(c)).xb.data
    for j, start in enumerate(np.flatnonzero(b)):
        perturbed = y.copy()
        perturbed[j] += 10.0
        out = byte_smooth_expand(ChunkStates.from_mask(tape.constant(perturbed), mask), mask, _conf(c)).xb.data
        np.testing.assert_array_equal(out[:start], base[:start])
        assert np.abs(out[start:] - base[start:]).max() > 0


def test_fuse_residual():
    gen = np.random.default_rng(7)
    xE = gen.standard_normal((5, 3))
    xB = gen.standard_normal((5, 3))
    out = fuse_residual(tape.constant(xE), tape.constant(xB))
    np.testing.assert_array_equal(out.data, xE + xB)
    np.testing.assert_array_equal(fuse_residual(tape.constant(xE), tape.constant(np.zeros((5, 3)))).data, xE)
    # commutative
    np.testing.assert_array_equal(fuse_residual(tape.constant(xB), tape.constant(xE)).data, out.data)


def test_fuse_confidence_ste_forward_matches_residual_bitwise():
    gen = np.random.default_rng(8)
    xE = gen.standard_normal((6, 4)).astype(np.float32)
    xB = gen.standard_normal((6, 4)).astype(np.float32)
    c = gen.uniform(0.5, 1.0, 6).astype(np.float32)
    c[0] = 1.0
    fused = fuse_confidence_ste(tape.constant(xE, np.float32), tape.constant(xB, np.float32), _conf_unchecked(c, np.float32))
    plain = fuse_residual(tape.constant(xE, np.float32), tape.constant(xB, np.float32))
    np.testing.assert_array_equal(fused.data, plain.data)


def test_fuse_confidence_ste_routes_rowdot_gradient_to_confidence():
    gen = np.random.default_rng(9)
    T, d = 5, 3
    xE = gen.standard_normal((T, d))
    xB = gen.standard_normal((T, d))
    w = gen.standard_normal((T, d))
    t = Tape()
    cl = t.leaf(np.linspace(0.5, 1.0, T))
    conf = Confidence.__new__(Confidence)
    conf.c = cl
    out = fuse_confidence_ste(tape.constant(xE), tape.constant(xB), conf)
    t.backward(tape.sum_all(out * tape.constant(w)))
    np.testing.assert_allclose(cl.grad, (w * xB).sum(axis=1), rtol=1e-12)


def test_fuse_confidence_ste_surrogate_finite_difference():
    # the straight-through surrogate is linear in c for a linear readout, so
    # finite differences of the surrogate match the routed gradient exactly
    gen = np.random.default_rng(10)
    T, d = 6, 2
    xE = gen.standard_normal((T, d))
    xB = gen.standard_normal((T, d))
    w = gen.standard_normal((T, d))
    c0 = gen.uniform(0.5, 1.0, T)

    def surrogate(c):
        return float(((xE + c[:, None] * xB) * w).sum())

    from chunklab.gradcheck import finite_difference_gradient, max_relative_error

    fd = finite_difference_gradient(lambda c: surrogate(c), [c0], 0)
    t = Tape()
    cl = t.leaf(c0)
    conf = Confidence.__new__(Confidence)
    conf.c = cl
    out = fuse_confidence_ste(tape.constant(xE), tape.constant(xB), conf)
    t.backward(tape.sum_all(out * tape.constant(w)))
    assert max_relative_error(cl.grad, fd) < 1e-6


def test_expand_rejects_empty():
    with pytest.raises(ValueError):
        ChunkStates(tape.constant(np.zeros((0, 2))), np.array([], dtype=np.int64))
