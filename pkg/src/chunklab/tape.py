"""Dense real arrays with a reverse-mode differentiation tape.

Arrays are thin wrappers around numpy ndarrays (float32 for training,
float64 for verification). Operations on tape-attached arrays record a
node on the owning tape; ``Tape.backward`` replays the records in exact
reverse order, summing each array's gradient over its consumers. Every
operation validates that its output is finite.

A tape and its arrays belong to one worker; independent tapes may run in
parallel processes.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "NonFiniteError",
    "DenseArray",
    "Tape",
    "constant",
    "backward",
    "matmul",
    "matvec",
    "add_rowvec",
    "broadcast_scalar",
    "broadcast_col",
    "row_dot",
    "rows",
    "concat",
    "sigmoid",
    "sqrt",
    "clamp",
    "stop_gradient",
    "ste_one",
    "scan_linear",
    "ema_scan",
    "gated_scan",
    "select_rows",
    "repeat_rows",
    "mse",
    "mean",
    "sum_all",
]


class NonFiniteError(ArithmeticError):
    """An operation produced NaN or Inf."""


def _check_finite(data: np.ndarray, op: str) -> None:
    if data.size == 0:
        return
    # min + max is NaN or infinite if the array holds a NaN or infinity;
    # cheaper than isfinite().all() (no bool temporary). The sum can also
    # overflow for finite values near the dtype max, so confirm exactly.
    with np.errstate(invalid="ignore", over="ignore"):
        probe = data.min() + data.max()
    if not np.isfinite(probe) and not np.isfinite(data).all():
        raise NonFiniteError(f"non-finite values produced by '{op}'")


class DenseArray:
    """A real-valued array, optionally attached to a differentiation tape.

    ``data`` is always a numpy array (possibly 0-d for scalars). ``grad``
    is populated by ``Tape.backward`` for every tape-attached array that
    received gradient. Plain constants have ``tape is None`` and never
    receive gradient.
    """

    __slots__ = ("data", "requires_grad", "grad", "tape")

    def __init__(self, data, requires_grad: bool = False, tape: "Tape | None" = None):
        self.data = np.asarray(data)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float64)
        _check_finite(self.data, "array creation")
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.tape = tape

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"DenseArray(shape={self.data.shape}, dtype={self.data.dtype})"

    # Arithmetic sugar. Same-shape arrays or python scalars only; the op
    # set deliberately excludes general broadcasting.
    def __add__(self, other):
        return _add(self, other)

    def __radd__(self, other):
        return _add(self, other)

    def __sub__(self, other):
        if isinstance(other, DenseArray):
            return _sub(self, other)
        return _add(self, -float(other))

    def __rsub__(self, other):
        return _rsub_const(float(other), self)

    def __mul__(self, other):
        return _mul(self, other)

    def __rmul__(self, other):
        return _mul(self, other)

    def __neg__(self):
        return _mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, DenseArray):
            return _div(self, other)
        return _mul(self, 1.0 / float(other))

    def __rtruediv__(self, other):
        return _rdiv_const(float(other), self)


def constant(data, dtype=np.float64) -> DenseArray:
    """An off-tape array; it never records operations or receives gradient."""
    return DenseArray(np.asarray(data, dtype=dtype))


class Tape:
    """Ordered record of operations for reverse-mode differentiation.

    Recording order is topological by construction (an output can only be
    built from arrays that already exist); ``backward`` walks the records
    in exact reverse order and accumulates (sums) each array's gradient
    across its consumers.
    """

    def __init__(self):
        self._records: list[tuple[DenseArray, tuple[DenseArray, ...], object]] = []

    def leaf(self, data, dtype=None) -> DenseArray:
        """Register a differentiable leaf (a parameter or watched input)."""
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype)
        return DenseArray(arr, requires_grad=True, tape=self)

    def record(self, out: DenseArray, parents: tuple[DenseArray, ...], backward_fn) -> None:
        self._records.append((out, parents, backward_fn))

    def __len__(self) -> int:
        return len(self._records)

    def backward(self, loss: DenseArray) -> None:
        """Populate ``grad`` on every tape-attached array feeding ``loss``."""
        if loss.tape is not self:
            raise ValueError("loss does not belong to this tape")
        if loss.data.shape != ():
            raise ValueError(f"backward requires a scalar loss, got shape {loss.data.shape}")
        loss.grad = np.ones((), dtype=loss.data.dtype)
        for out, parents, backward_fn in reversed(self._records):
            if out.grad is None:
                continue
            backward_fn(out.grad, *parents)


def backward(loss: DenseArray) -> None:
    """Run reverse-mode differentiation from a scalar tape node."""
    if loss.tape is None:
        raise ValueError("loss is not attached to a tape")
    loss.tape.backward(loss)


def _accum(arr: DenseArray, g: np.ndarray, fresh: bool = False) -> None:
    """Add ``g`` to the gradient buffer of ``arr``.

    ``fresh`` marks ``g`` as a temporary owned by the caller, letting the
    first accumulation adopt it without a copy; rules that pass an upstream
    gradient (or a view of it) through must leave it False.
    """
    if arr.tape is None:
        return
    if arr.grad is None:
        arr.grad = g if fresh and isinstance(g, np.ndarray) else np.array(g, dtype=arr.data.dtype)
    else:
        arr.grad += g


def _tape_of(*arrays: DenseArray) -> Tape | None:
    tape = None
    for a in arrays:
        if a.tape is not None:
            if tape is not None and tape is not a.tape:
                raise ValueError("operands belong to different tapes")
            tape = a.tape
    return tape


def _make(data: np.ndarray, op: str, parents: tuple[DenseArray, ...], backward_fn) -> DenseArray:
    _check_finite(data, op)
    tape = _tape_of(*parents)
    out = DenseArray(data, tape=tape)
    if tape is not None:
        tape.record(out, parents, backward_fn)
    return out


def _as_dense(x, like: DenseArray) -> DenseArray:
    if isinstance(x, DenseArray):
        return x
    return DenseArray(np.asarray(x, dtype=like.data.dtype))


def _same_shape(a: DenseArray, b: DenseArray, op: str) -> None:
    if a.data.shape != b.data.shape:
        raise ValueError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")


# ---------------------------------------------------------------------------
# Elementwise arithmetic


def _add(a: DenseArray, other):
    if isinstance(other, DenseArray):
        _same_shape(a, other, "add")

        def bwd(g, x, y):
            _accum(x, g)
            _accum(y, g)

        return _make(a.data + other.data, "add", (a, other), bwd)
    c = float(other)

    def bwd(g, x):
        _accum(x, g)

    return _make(a.data + np.asarray(c, dtype=a.data.dtype), "add", (a,), bwd)


def _sub(a: DenseArray, b: DenseArray):
    _same_shape(a, b, "sub")

    def bwd(g, x, y):
        _accum(x, g)
        _accum(y, -g, fresh=True)

    return _make(a.data - b.data, "sub", (a, b), bwd)


def _rsub_const(c: float, a: DenseArray):
    def bwd(g, x):
        _accum(x, -g, fresh=True)

    return _make(np.asarray(c, dtype=a.data.dtype) - a.data, "rsub", (a,), bwd)


def _mul(a: DenseArray, other):
    if isinstance(other, DenseArray):
        _same_shape(a, other, "mul")

        def bwd(g, x, y):
            _accum(x, g * y.data, fresh=True)
            _accum(y, g * x.data, fresh=True)

        return _make(a.data * other.data, "mul", (a, other), bwd)
    c = float(other)

    def bwd(g, x):
        _accum(x, g * np.asarray(c, dtype=g.dtype), fresh=True)

    return _make(a.data * np.asarray(c, dtype=a.data.dtype), "mul", (a,), bwd)


def _div(a: DenseArray, b: DenseArray):
    _same_shape(a, b, "div")

    def bwd(g, x, y):
        _accum(x, g / y.data, fresh=True)
        _accum(y, -g * x.data / (y.data * y.data), fresh=True)

    return _make(a.data / b.data, "div", (a, b), bwd)


def _rdiv_const(c: float, a: DenseArray):
    def bwd(g, x):
        _accum(x, -g * np.asarray(c, dtype=g.dtype) / (x.data * x.data), fresh=True)

    return _make(np.asarray(c, dtype=a.data.dtype) / a.data, "rdiv", (a,), bwd)


# ---------------------------------------------------------------------------
# Linear algebra


def matmul(a: DenseArray, b: DenseArray) -> DenseArray:
    """Matrix product [m x k] @ [k x n] -> [m x n]."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.data.shape} @ {b.data.shape}")

    def bwd(g, x, y):
        _accum(x, g @ y.data.T, fresh=True)
        _accum(y, x.data.T @ g, fresh=True)

    return _make(a.data @ b.data, "matmul", (a, b), bwd)


def matvec(a: DenseArray, w: DenseArray) -> DenseArray:
    """Matrix-vector product [m x k] @ [k] -> [m]."""
    if a.data.ndim != 2 or w.data.ndim != 1 or a.data.shape[1] != w.data.shape[0]:
        raise ValueError(f"matvec: incompatible shapes {a.data.shape} @ {w.data.shape}")

    def bwd(g, x, y):
        _accum(x, g[:, None] * y.data[None, :], fresh=True)
        _accum(y, x.data.T @ g, fresh=True)

    return _make(a.data @ w.data, "matvec", (a, w), bwd)


def add_rowvec(a: DenseArray, v: DenseArray) -> DenseArray:
    """Add a length-d vector to every row of a [T x d] array."""
    if a.data.ndim != 2 or v.data.ndim != 1 or a.data.shape[1] != v.data.shape[0]:
        raise ValueError(f"add_rowvec: incompatible shapes {a.data.shape} + {v.data.shape}")

    def bwd(g, x, y):
        _accum(x, g)
        _accum(y, g.sum(axis=0), fresh=True)

    return _make(a.data + v.data[None, :], "add_rowvec", (a, v), bwd)


def broadcast_scalar(s: DenseArray, n: int) -> DenseArray:
    """Tile a scalar into a length-n vector."""
    if s.data.ndim != 0:
        raise ValueError("broadcast_scalar expects a 0-d array")

    def bwd(g, x):
        _accum(x, g.sum())

    return _make(np.full(n, s.data, dtype=s.data.dtype), "broadcast_scalar", (s,), bwd)


def broadcast_col(s: DenseArray, d: int) -> DenseArray:
    """Tile a length-T vector into a [T x d] array (columns identical)."""
    if s.data.ndim != 1:
        raise ValueError("broadcast_col expects a 1-d array")

    def bwd(g, x):
        _accum(x, g.sum(axis=1), fresh=True)

    data = np.repeat(s.data[:, None], d, axis=1)
    return _make(data, "broadcast_col", (s,), bwd)


def row_dot(a: DenseArray, b: DenseArray) -> DenseArray:
    """Per-row dot product of two [T x d] arrays -> [T]."""
    _same_shape(a, b, "row_dot")
    if a.data.ndim != 2:
        raise ValueError("row_dot expects 2-d arrays")

    def bwd(g, x, y):
        _accum(x, g[:, None] * y.data, fresh=True)
        _accum(y, g[:, None] * x.data, fresh=True)

    return _make((a.data * b.data).sum(axis=1), "row_dot", (a, b), bwd)


def rows(a: DenseArray, start: int, stop: int) -> DenseArray:
    """Contiguous row slice a[start:stop]; gradient scatters back."""
    n = a.data.shape[0]
    if not (0 <= start <= stop <= n):
        raise ValueError(f"rows: invalid slice [{start}:{stop}] of {n}")

    def bwd(g, x):
        full = np.zeros_like(x.data)
        full[start:stop] = g
        _accum(x, full, fresh=True)

    return _make(a.data[start:stop], "rows", (a,), bwd)


def concat(parts: list[DenseArray]) -> DenseArray:
    """Concatenate along the first axis; gradient splits back."""
    if not parts:
        raise ValueError("concat of nothing")
    sizes = [p.data.shape[0] for p in parts]
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    def bwd(g, *xs):
        for i, x in enumerate(xs):
            _accum(x, g[offsets[i]:offsets[i + 1]])

    return _make(np.concatenate([p.data for p in parts], axis=0), "concat", tuple(parts), bwd)


# ---------------------------------------------------------------------------
# Nonlinearities and gradient shaping


def sigmoid(x: DenseArray) -> DenseArray:
    """Elementwise logistic function; gradient s(1-s).

    Computed as 1/(1+e^-x) with in-place passes; the exponential may
    overflow to infinity for very negative inputs, which correctly rounds
    the output to 0.
    """
    out = np.negative(x.data)
    with np.errstate(over="ignore"):
        np.exp(out, out=out)
    out += 1.0
    np.reciprocal(out, out=out)

    def bwd(g, a):
        gd = 1.0 - out
        gd *= out
        gd *= g
        _accum(a, gd, fresh=True)

    return _make(out, "sigmoid", (x,), bwd)


def sqrt(x: DenseArray) -> DenseArray:
    """Elementwise square root; input must be strictly positive."""
    if (x.data <= 0).any():
        raise ValueError("sqrt requires strictly positive input")
    out = np.sqrt(x.data)

    def bwd(g, a):
        _accum(a, g * 0.5 / out, fresh=True)

    return _make(out, "sqrt", (x,), bwd)


def clamp(x: DenseArray, lo: float, hi: float) -> DenseArray:
    """Clamp to [lo, hi]; gradient is 1 strictly inside, 0 outside (saturating)."""
    if lo >= hi:
        raise ValueError(f"clamp: lo={lo} must be < hi={hi}")
    inside = (x.data > lo) & (x.data < hi)

    def bwd(g, a):
        _accum(a, g * inside, fresh=True)

    return _make(np.clip(x.data, lo, hi), "clamp", (x,), bwd)


def stop_gradient(x: DenseArray) -> DenseArray:
    """Forward identity that contributes zero gradient to its parents."""
    return DenseArray(x.data)


def ste_one(c: DenseArray) -> DenseArray:
    """All-ones forward with a straight-through backward into ``c``.

    The forward value is 1 everywhere, so multiplying by ``ste_one(c)`` is a
    forward no-op; the incoming gradient passes to ``c`` unchanged.
    """

    def bwd(g, a):
        _accum(a, g)

    return _make(np.ones_like(c.data), "ste_one", (c,), bwd)


# ---------------------------------------------------------------------------
# First-order linear recurrences

_SCAN_BLOCK = 512

try:
    from numba import njit as _njit

    @_njit(cache=True)
    def _scan_seq_kernel(a, b, out):  # pragma: no cover - exercised via _scan_forward
        T, d = b.shape
        for j in range(d):
            out[0, j] = b[0, j]
        for t in range(1, T):
            for j in range(d):
                out[t, j] = a[t, j] * out[t - 1, j] + b[t, j]

    @_njit(cache=True)
    def _ema_fwd_kernel(v, c, out):  # pragma: no cover
        T, d = v.shape
        for j in range(d):
            out[0, j] = c[0] * v[0, j]
        for t in range(1, T):
            ct = c[t]
            rt = 1.0 - ct
            for j in range(d):
                out[t, j] = ct * v[t, j] + rt * out[t - 1, j]

    @_njit(cache=True)
    def _ema_bwd_kernel(v, c, out, gup, dv, dc):  # pragma: no cover
        # delta_t = gup_t + (1 - c_{t+1}) * delta_{t+1};
        # dv_t = c_t * delta_t; dc_t = sum_j delta_tj * (v_tj - out_{t-1,j})
        T, d = v.shape
        delta = np.empty(d, dtype=v.dtype)
        for t in range(T - 1, -1, -1):
            if t == T - 1:
                for j in range(d):
                    delta[j] = gup[t, j]
            else:
                rnext = 1.0 - c[t + 1]
                for j in range(d):
                    delta[j] = gup[t, j] + rnext * delta[j]
            ct = c[t]
            acc = 0.0
            for j in range(d):
                prev = out[t - 1, j] if t > 0 else 0.0
                acc += delta[j] * (v[t, j] - prev)
                dv[t, j] = ct * delta[j]
            dc[t] = acc

    @_njit(cache=True)
    def _gated_fwd_kernel(g, u, out):  # pragma: no cover
        T, d = u.shape
        for j in range(d):
            out[0, j] = g[0, j] * u[0, j]
        for t in range(1, T):
            for j in range(d):
                out[t, j] = (1.0 - g[t, j]) * out[t - 1, j] + g[t, j] * u[t, j]

    @_njit(cache=True)
    def _gated_bwd_kernel(g, u, out, gup, dg, du):  # pragma: no cover
        # delta_t = gup_t + (1 - g_{t+1}) * delta_{t+1};
        # dg_t = delta_t * (u_t - out_{t-1}); du_t = delta_t * g_t
        T, d = u.shape
        delta = np.empty(d, dtype=u.dtype)
        for t in range(T - 1, -1, -1):
            if t == T - 1:
                for j in range(d):
                    delta[j] = gup[t, j]
            else:
                for j in range(d):
                    delta[j] = gup[t, j] + (1.0 - g[t + 1, j]) * delta[j]
            for j in range(d):
                prev = out[t - 1, j] if t > 0 else 0.0
                dg[t, j] = delta[j] * (u[t, j] - prev)
                du[t, j] = delta[j] * g[t, j]

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


def _scan_forward(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """out_t = a_t * out_{t-1} + b_t with out_0 = 0, for [T x d] inputs.

    Dispatches to a compiled sequential kernel when numba is available,
    otherwise to the blocked numpy formulation. The two agree to rounding
    error; each is deterministic, and one environment always uses one path.
    """
    if _HAVE_NUMBA:
        T = b.shape[0]
        if T == 0:
            return b.copy()
        ac = np.ascontiguousarray(a)
        bc = np.ascontiguousarray(b)
        out = np.empty_like(bc)
        _scan_seq_kernel(ac, bc, out)
        return out
    return _scan_blocked(a, b)


def _scan_blocked(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pure-numpy scan: within-block scans run across all blocks at once
    (arrays laid out [block, nb, d] so each step is contiguous), then a short
    sequential pass stitches the block carries together. Coefficients are
    expected in [0, 1]; within-block cumulative products can then only
    underflow, which is benign (the true carry contribution is negligible).
    """
    T, d = b.shape
    if T == 0:
        return b.copy()
    block = min(_SCAN_BLOCK, max(1, math.isqrt(T - 1) + 1))
    nb = -(-T // block)
    pad = nb * block - T
    if pad:
        a = np.concatenate([a, np.ones((pad, d), dtype=a.dtype)])
        b = np.concatenate([b, np.zeros((pad, d), dtype=b.dtype)])
    A = np.ascontiguousarray(a.reshape(nb, block, d).transpose(1, 0, 2))
    B = np.ascontiguousarray(b.reshape(nb, block, d).transpose(1, 0, 2))
    local = np.empty_like(B)
    prefix = np.empty_like(A)
    prev = B[0].copy()
    pref = A[0].copy()
    local[0] = prev
    prefix[0] = pref
    for j in range(1, block):
        prev = A[j] * prev + B[j]
        local[j] = prev
        pref = pref * A[j]
        prefix[j] = pref
    carry = np.empty((nb, d), dtype=b.dtype)
    state = np.zeros(d, dtype=b.dtype)
    for i in range(nb):
        carry[i] = state
        state = prefix[-1, i] * state + local[-1, i]
    out = local + prefix * carry[None, :, :]
    return np.ascontiguousarray(out.transpose(1, 0, 2)).reshape(-1, d)[:T]


def scan_linear(a: DenseArray, b: DenseArray) -> DenseArray:
    """Differentiable first-order recurrence out_t = a_t * out_{t-1} + b_t.

    ``a`` and ``b`` are [T x d]; the initial state is zero, so a_1 is unused.
    Backward runs the adjoint recurrence in reverse and yields gradients for
    both the coefficients and the drive.
    """
    _same_shape(a, b, "scan_linear")
    if a.data.ndim != 2:
        raise ValueError("scan_linear expects 2-d arrays")
    out = _scan_forward(a.data, b.data)

    def bwd(g, ca, cb):
        # delta_t = g_t + a_{t+1} * delta_{t+1}: a reversed scan with the
        # coefficient sequence shifted by one.
        a_rev = np.roll(ca.data[::-1], 1, axis=0)
        a_rev[0] = 1.0
        delta = _scan_forward(a_rev, g[::-1])[::-1]
        _accum(cb, delta, fresh=True)
        shifted = np.zeros_like(out)
        shifted[1:] = out[:-1]
        _accum(ca, delta * shifted, fresh=True)

    return _make(out, "scan_linear", (a, b), bwd)


def ema_scan(v: DenseArray, c: DenseArray) -> DenseArray:
    """Confidence-weighted moving average o_i = c_i * v_i + (1 - c_i) * o_{i-1}.

    ``v`` is [T x d], ``c`` is [T] with entries in [0, 1]; o_0 = 0, which is
    inert whenever c_1 = 1. Differentiable with respect to both arguments.
    """
    if v.data.ndim != 2 or c.data.ndim != 1 or v.data.shape[0] != c.data.shape[0]:
        raise ValueError(f"ema_scan: incompatible shapes v={v.data.shape}, c={c.data.shape}")
    if (c.data < 0).any() or (c.data > 1).any():
        raise ValueError("ema_scan: c must lie in [0, 1]")
    if not _HAVE_NUMBA or v.data.shape[0] == 0:
        col = broadcast_col(c, v.data.shape[1])
        return scan_linear(1.0 - col, col * v)
    vd = np.ascontiguousarray(v.data)
    cd = np.ascontiguousarray(c.data)
    out = np.empty_like(vd)
    _ema_fwd_kernel(vd, cd, out)

    def bwd(g, cv, cc):
        dv = np.empty_like(vd)
        dc = np.empty_like(cd)
        _ema_bwd_kernel(vd, cd, out, np.ascontiguousarray(g), dv, dc)
        _accum(cv, dv, fresh=True)
        _accum(cc, dc, fresh=True)

    return _make(out, "ema_scan", (v, c), bwd)


def gated_scan(g: DenseArray, u: DenseArray) -> DenseArray:
    """Gated first-order recurrence h_t = (1 - g_t) * h_{t-1} + g_t * u_t.

    Both arguments are [T x d] with gates in [0, 1]; h_0 = 0. Equivalent to
    ``scan_linear(1 - g, g * u)`` but fused, and differentiable w.r.t. both.
    """
    _same_shape(g, u, "gated_scan")
    if g.data.ndim != 2:
        raise ValueError("gated_scan expects 2-d arrays")
    if not _HAVE_NUMBA or g.data.shape[0] == 0:
        return scan_linear(1.0 - g, g * u)
    gd = np.ascontiguousarray(g.data)
    ud = np.ascontiguousarray(u.data)
    out = np.empty_like(ud)
    _gated_fwd_kernel(gd, ud, out)

    def bwd(grad, cg, cu):
        dg = np.empty_like(gd)
        du = np.empty_like(ud)
        _gated_bwd_kernel(gd, ud, out, np.ascontiguousarray(grad), dg, du)
        _accum(cg, dg, fresh=True)
        _accum(cu, du, fresh=True)

    return _make(out, "gated_scan", (g, u), bwd)


# ---------------------------------------------------------------------------
# Boundary-indexed gather/scatter


def _as_mask(b) -> np.ndarray:
    mask = np.asarray(b)
    if mask.ndim != 1:
        raise ValueError("boundary mask must be 1-d")
    if not np.isin(mask, (0, 1)).all():
        raise ValueError("boundary mask must be 0/1")
    return mask.astype(bool)


def select_rows(v: DenseArray, b) -> DenseArray:
    """Keep the rows where the boundary mask is 1, order preserved.

    The mask is a plain 0/1 array with b_1 = 1; gradient scatters back to the
    selected rows.
    """
    mask = _as_mask(b)
    if v.data.shape[0] != mask.shape[0]:
        raise ValueError(f"select_rows: {v.data.shape[0]} rows vs mask length {mask.shape[0]}")
    if not mask[0]:
        raise ValueError("select_rows: mask must start with a boundary (b_1 = 1)")
    idx = np.flatnonzero(mask)

    def bwd(g, x):
        full = np.zeros_like(x.data)
        full[idx] = g
        _accum(x, full, fresh=True)

    return _make(v.data[idx].copy(), "select_rows", (v,), bwd)


def repeat_rows(u: DenseArray, b) -> DenseArray:
    """Expand chunk rows to full length: row j fills positions T(j)..T(j+1)-1.

    The mask must start with 1 and contain exactly as many ones as ``u`` has
    rows; gradient sums over each repeat span.
    """
    mask = _as_mask(b)
    if not mask[0]:
        raise ValueError("repeat_rows: mask must start with a boundary (b_1 = 1)")
    starts = np.flatnonzero(mask)
    if u.data.shape[0] != starts.shape[0]:
        raise ValueError(f"repeat_rows: {u.data.shape[0]} chunk rows vs {starts.shape[0]} boundaries")
    seg = np.cumsum(mask) - 1

    def bwd(g, x):
        _accum(x, np.add.reduceat(g, starts, axis=0), fresh=True)

    return _make(u.data[seg], "repeat_rows", (u,), bwd)


# ---------------------------------------------------------------------------
# Reductions


def mse(a: DenseArray, b: DenseArray) -> DenseArray:
    """Mean over rows of the squared row distance: (1/T) sum_t ||a_t - b_t||^2."""
    _same_shape(a, b, "mse")
    T = a.data.shape[0]
    diff = a.data - b.data
    val = np.asarray(np.vdot(diff, diff) / T, dtype=a.data.dtype)

    def bwd(g, x, y):
        gd = diff * np.asarray(2.0 * g / T, dtype=diff.dtype)
        _accum(x, gd, fresh=True)
        _accum(y, -gd, fresh=True)

    return _make(val, "mse", (a, b), bwd)


def mean(x: DenseArray) -> DenseArray:
    """Mean over all elements -> scalar."""
    n = x.data.size

    def bwd(g, a):
        _accum(a, np.full_like(a.data, g / n), fresh=True)

    return _make(np.asarray(x.data.mean(), dtype=x.data.dtype), "mean", (x,), bwd)


def sum_all(x: DenseArray) -> DenseArray:
    """Sum over all elements -> scalar."""

    def bwd(g, a):
        _accum(a, np.full_like(a.data, g), fresh=True)

    return _make(np.asarray(x.data.sum(), dtype=x.data.dtype), "sum", (x,), bwd)
