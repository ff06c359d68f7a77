"""Tape engine: op semantics, gradient rules, and the scan fast path."""

import numpy as np
import pytest

from chunklab import tape
from chunklab.gradcheck import check_gradients, finite_difference_gradient, max_relative_error
from chunklab.tape import DenseArray, NonFiniteError, Tape


def _gen(seed=0):
    return np.random.default_rng(seed)


def test_matmul_identity():
    a = tape.constant(np.eye(2))
    b = tape.constant([[1.0, 2.0], [3.0, 4.0]])
    out = tape.matmul(a, b)
    np.testing.assert_array_equal(out.data, b.data)


def test_matmul_hand_case():
    a = tape.constant([[1.0, 2.0], [3.0, 4.0]])
    b = tape.constant([[1.0], [1.0]])
    out = tape.matmul(a, b)
    np.testing.assert_array_equal(out.data, [[3.0], [7.0]])


def test_matmul_gradient_of_sum_is_transpose_broadcast():
    gen = _gen(1)
    A = gen.standard_normal((3, 4))
    B = gen.standard_normal((4, 2))
    t = Tape()
    al = t.leaf(A)
    out = tape.sum_all(tape.matmul(al, tape.constant(B)))
    t.backward(out)
    # d sum(A@B) / dA = rows of B summed, broadcast to every row of A
    np.testing.assert_allclose(al.grad, np.tile(B.sum(axis=1), (3, 1)), rtol=1e-12)

    def f(a):
        return (a @ B).sum()

    fd = finite_difference_gradient(lambda a: f(a), [A], 0)
    assert max_relative_error(al.grad, fd) < 1e-4


def test_matmul_shape_mismatch():
    with pytest.raises(ValueError):
        tape.matmul(tape.constant(np.ones((2, 3))), tape.constant(np.ones((2, 3))))


def test_sigmoid_values_and_gradient():
    t = Tape()
    x = t.leaf(np.array([0.0, 50.0, -50.0]))
    s = tape.sigmoid(x)
    assert s.data[0] == 0.5
    assert np.float32(s.data[1]) == np.float32(1.0)
    assert s.data[2] < 1e-20
    out = tape.sum_all(s)
    t.backward(out)
    assert abs(x.grad[0] - 0.25) < 1e-12


def test_clamp_values_and_gradient():
    lo, hi = 1e-6, 1 - 1e-6
    t = Tape()
    x = t.leaf(np.array([0.5, 2.0, -1.0]))
    c = tape.clamp(x, lo, hi)
    np.testing.assert_allclose(c.data, [0.5, hi, lo])
    t.backward(tape.sum_all(c))
    np.testing.assert_array_equal(x.grad, [1.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        tape.clamp(x, 1.0, 0.0)


def test_clamp_interior_finite_difference():
    gen = _gen(2)
    x = gen.uniform(-0.4, 0.4, 7)
    w = tape.constant(gen.standard_normal(7))
    check_gradients(lambda t, ls: tape.sum_all(tape.clamp(ls[0], -0.5, 0.5) * w), [x])


def test_stop_gradient_identity_and_block():
    t = Tape()
    x = t.leaf(np.array([1.0, -2.0, 3.0]))
    sg = tape.stop_gradient(x)
    np.testing.assert_array_equal(sg.data, x.data)
    # grad of sum(sg(x) * x) is sg(x), not 2x
    out = tape.sum_all(sg * x)
    t.backward(out)
    np.testing.assert_array_equal(t_grad := x.grad, x.data)
    # matches finite differences of the frozen-copy composite
    frozen = x.data.copy()

    def f(arr):
        return float((frozen * arr).sum())

    fd = finite_difference_gradient(f, [x.data], 0)
    assert max_relative_error(t_grad, fd) < 1e-6


def test_stop_gradient_idempotent():
    x = tape.constant([1.0, 2.0])
    np.testing.assert_array_equal(tape.stop_gradient(tape.stop_gradient(x)).data, x.data)


def test_ste_one_forward_and_backward():
    t = Tape()
    c = t.leaf(np.array([0.3, 0.9]))
    ones = tape.ste_one(c)
    np.testing.assert_array_equal(ones.data, [1.0, 1.0])
    v = tape.constant([2.0, -5.0])
    t.backward(tape.sum_all(ones * v))
    np.testing.assert_array_equal(c.grad, v.data)


def test_ema_scan_all_ones_is_identity():
    gen = _gen(3)
    v = tape.constant(gen.standard_normal((9, 3)))
    c = tape.constant(np.ones(9))
    out = tape.ema_scan(v, c)
    np.testing.assert_array_equal(out.data, v.data)


def test_ema_scan_constant_extension():
    gen = _gen(4)
    v = gen.standard_normal((6, 2))
    c = np.zeros(6)
    c[0] = 1.0
    out = tape.ema_scan(tape.constant(v), tape.constant(c))
    np.testing.assert_allclose(out.data, np.tile(v[0], (6, 1)), rtol=1e-12)


def test_ema_scan_finite_difference():
    gen = _gen(5)
    T, d = 16, 4
    v = gen.standard_normal((T, d))
    c = gen.uniform(0.05, 0.95, T)
    w = tape.constant(gen.standard_normal((T, d)))
    worst = check_gradients(lambda t, ls: tape.sum_all(tape.ema_scan(ls[0], ls[1]) * w), [v, c])
    assert worst < 1e-4


def test_ema_scan_validates():
    v = tape.constant(np.ones((4, 2)))
    with pytest.raises(ValueError):
        tape.ema_scan(v, tape.constant(np.ones(3)))
    with pytest.raises(ValueError):
        tape.ema_scan(v, tape.constant([0.5, 0.5, 0.5, 1.5]))


def test_scan_linear_matches_loop_oracle():
    # both scan implementations against a direct sequential evaluation
    from chunklab.tape import _scan_blocked, _scan_forward

    for seed, T, d, dtype in [(0, 1, 3, np.float64), (1, 7, 2, np.float64),
                              (2, 64, 5, np.float64), (3, 129, 4, np.float64),
                              (4, 1000, 3, np.float32)]:
        gen = _gen(seed)
        a = gen.uniform(0, 1, (T, d)).astype(dtype)
        b = gen.standard_normal((T, d)).astype(dtype)
        expect = np.empty_like(b)
        prev = np.zeros(d, dtype=dtype)
        for i in range(T):
            prev = a[i] * prev + b[i]
            expect[i] = prev
        tol = 1e-12 if dtype == np.float64 else 1e-5
        out = tape.scan_linear(tape.constant(a, dtype), tape.constant(b, dtype)).data
        np.testing.assert_allclose(out, expect, rtol=tol, atol=tol)
        np.testing.assert_allclose(_scan_forward(a, b), expect, rtol=tol, atol=tol)
        np.testing.assert_allclose(_scan_blocked(a, b), expect, rtol=tol, atol=tol)


def test_scan_linear_finite_difference_long():
    # long enough to exercise multiple blocks in forward and backward
    gen = _gen(6)
    T, d = 150, 2
    a = gen.uniform(0, 1, (T, d))
    b = gen.standard_normal((T, d))
    w = tape.constant(gen.standard_normal((T, d)))
    check_gradients(lambda t, ls: tape.mean(tape.scan_linear(ls[0], ls[1]) * w), [a, b])


def test_gated_scan_matches_composition_and_gradients():
    from chunklab.tape import scan_linear

    gen = _gen(12)
    T, d = 23, 4
    g = gen.uniform(0.0, 1.0, (T, d))
    u = gen.standard_normal((T, d))
    fused = tape.gated_scan(tape.constant(g), tape.constant(u)).data
    composed = scan_linear(1.0 - tape.constant(g), tape.constant(g) * tape.constant(u)).data
    np.testing.assert_allclose(fused, composed, rtol=1e-12, atol=1e-12)

    w = tape.constant(gen.standard_normal((T, d)))
    check_gradients(lambda t, ls: tape.mean(tape.gated_scan(ls[0], ls[1]) * w), [g, u])


def test_ema_scan_fused_matches_composition():
    from chunklab.tape import broadcast_col, scan_linear

    gen = _gen(13)
    T, d = 31, 5
    v = gen.standard_normal((T, d))
    c = gen.uniform(0.0, 1.0, T)
    fused = tape.ema_scan(tape.constant(v), tape.constant(c)).data
    col = broadcast_col(tape.constant(c), d)
    composed = scan_linear(1.0 - col, col * tape.constant(v)).data
    np.testing.assert_allclose(fused, composed, rtol=1e-12, atol=1e-12)


def test_select_rows_cases():
    v = tape.constant(np.arange(8.0).reshape(4, 2))
    out = tape.select_rows(v, np.array([1, 0, 0, 1]))
    np.testing.assert_array_equal(out.data, [[0.0, 1.0], [6.0, 7.0]])
    out = tape.select_rows(v, np.ones(4))
    np.testing.assert_array_equal(out.data, v.data)
    with pytest.raises(ValueError):
        tape.select_rows(v, np.array([0, 1, 0, 0]))


def test_repeat_rows_cases():
    u = tape.constant([[1.0, 1.0], [2.0, 2.0]])
    out = tape.repeat_rows(u, np.array([1, 0, 1, 0]))
    np.testing.assert_array_equal(out.data, [[1, 1], [1, 1], [2, 2], [2, 2]])
    single = tape.repeat_rows(tape.constant([[3.0]]), np.array([1, 0, 0]))
    np.testing.assert_array_equal(single.data, [[3.0], [3.0], [3.0]])
    with pytest.raises(ValueError):
        tape.repeat_rows(u, np.array([1, 0, 0, 0]))


def test_select_repeat_roundtrip_property():
    # select_rows(repeat_rows(u, b), b) == u over 100 random instances
    gen = _gen(7)
    for _ in range(100):
        T = int(gen.integers(1, 40))
        d = int(gen.integers(1, 6))
        b = (gen.random(T) < 0.35).astype(np.uint8)
        b[0] = 1
        K = int(b.sum())
        u = gen.standard_normal((K, d))
        out = tape.select_rows(tape.repeat_rows(tape.constant(u), b), b)
        np.testing.assert_array_equal(out.data, u)


def test_repeat_rows_finite_difference():
    gen = _gen(8)
    b = np.array([1, 0, 1, 1, 0, 0, 1], dtype=np.uint8)
    u = gen.standard_normal((4, 3))
    w = tape.constant(gen.standard_normal((7, 3)))
    check_gradients(lambda t, ls: tape.mean(tape.repeat_rows(ls[0], b) * w), [u])


def test_mse_values_and_gradient():
    a = tape.constant(np.ones((5, 3)))
    b = tape.constant(np.zeros((5, 3)))
    assert tape.mse(a, b).item() == pytest.approx(3.0)
    assert tape.mse(a, a).item() == 0.0

    gen = _gen(9)
    A = gen.standard_normal((6, 2))
    B = gen.standard_normal((6, 2))
    t = Tape()
    al = t.leaf(A)
    bl = t.leaf(B)
    out = tape.mse(al, bl)
    t.backward(out)
    np.testing.assert_allclose(al.grad, 2 * (A - B) / 6, rtol=1e-12)
    np.testing.assert_allclose(bl.grad, -2 * (A - B) / 6, rtol=1e-12)
    check_gradients(lambda t2, ls: tape.mse(ls[0], ls[1]), [A, B])


def test_backward_basics():
    t = Tape()
    x = t.leaf(np.array([1.0, 2.0, 3.0]))
    t.backward(tape.sum_all(x))
    np.testing.assert_array_equal(x.grad, np.ones(3))

    t2 = Tape()
    y = t2.leaf(np.array([1.0, -2.0, 3.0]))
    t2.backward(tape.sum_all(y * y))
    np.testing.assert_array_equal(y.grad, 2 * y.data)


def test_backward_requires_scalar():
    t = Tape()
    x = t.leaf(np.ones(3))
    y = x * 2.0
    with pytest.raises(ValueError):
        t.backward(y)


def test_backward_accumulates_across_consumers():
    t = Tape()
    x = t.leaf(np.array([2.0]))
    y = x * 3.0
    out = tape.sum_all(y * y) + tape.sum_all(y)
    t.backward(out)
    # d/dx (9x^2 + 3x) = 18x + 3
    np.testing.assert_allclose(x.grad, [18 * 2.0 + 3.0])


def test_full_pipeline_finite_difference():
    gen = _gen(10)
    x = gen.standard_normal((8, 3))
    W = gen.standard_normal((3, 3))

    def build(t, ls):
        h = tape.sigmoid(tape.matmul(ls[0], ls[1]))
        c = tape.clamp(tape.matvec(h, tape.constant(np.array([0.2, -0.3, 0.5]))), 0.05, 0.95)
        return tape.mse(tape.ema_scan(h, c), tape.constant(np.zeros((8, 3))))

    check_gradients(build, [x, W])


def test_non_finite_rejected():
    with pytest.raises(NonFiniteError):
        DenseArray(np.array([1.0, np.inf]))
    big = tape.constant(np.array([1e308]))
    with np.errstate(over="ignore"), pytest.raises(NonFiniteError):
        big * big  # overflows to inf


def test_mixed_tapes_rejected():
    t1, t2 = Tape(), Tape()
    a = t1.leaf(np.ones(2))
    b = t2.leaf(np.ones(2))
    with pytest.raises(ValueError):
        a + b


def test_rows_and_concat():
    gen = _gen(11)
    x = gen.standard_normal((6, 2))
    t = Tape()
    xl = t.leaf(x)
    head = tape.rows(xl, 0, 2)
    tail = tape.rows(xl, 2, 6)
    out = tape.concat([head, tail])
    np.testing.assert_array_equal(out.data, x)
    t.backward(tape.sum_all(out * out))
    np.testing.assert_allclose(xl.grad, 2 * x, rtol=1e-12)
