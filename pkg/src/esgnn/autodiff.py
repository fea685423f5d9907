"""Dense float64 tensors with reverse-mode automatic differentiation.

The design is a classic Wengert list: while a Tape is active, every
differentiable operation appends a backward closure to it in execution
order. ``backward`` replays the list in reverse, propagating per-pass
gradients through a scratch map and finally adding them into ``Tensor.grad``
buffers. Gradients therefore keep accumulating across backward calls until
the caller zeroes them, and a second backward doubles them exactly.

Tapes and tensors are not shared between threads; the active-tape stack is
thread local so read-only evaluation can fan out across workers.
"""

from __future__ import annotations

import threading

import numpy as np

from .errors import (
    ConfigurationError,
    ContractError,
    DimensionError,
    DomainError,
    EmptySetError,
)

_tls = threading.local()


def _tape_stack() -> list:
    stack = getattr(_tls, "stack", None)
    if stack is None:
        stack = []
        _tls.stack = stack
    return stack


def active_tape():
    """The innermost tape currently recording in this thread, or None."""
    stack = _tape_stack()
    return stack[-1] if stack else None


def _kink_monitor():
    return getattr(_tls, "kink_monitor", None)


class KinkMonitor:
    """Records how close piecewise ops pass to their switching points.

    relu and the max reductions are only differentiable away from sign flips
    and winner changes; a finite-difference probe that steps across one sees
    a slope jump instead of the analytic gradient. While active as a context
    manager, ``min_margin`` bounds how far every relu preactivation stayed
    from zero and every max winner stayed ahead of its runner-up, so a
    caller can certify an evaluation point before differencing around it.
    """

    def __init__(self):
        self.min_margin = np.inf

    def observe(self, value: float) -> None:
        if value < self.min_margin:
            self.min_margin = float(value)

    def __enter__(self) -> "KinkMonitor":
        self._prev = _kink_monitor()
        _tls.kink_monitor = self
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        _tls.kink_monitor = self._prev
        return False


class Tape:
    """Ordered record of executed operations, replayable in reverse."""

    def __init__(self):
        self._ops: list = []

    def record(self, backward_fn) -> None:
        self._ops.append(backward_fn)

    def __len__(self) -> int:
        return len(self._ops)

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        popped = _tape_stack().pop()
        if popped is not self:  # pragma: no cover - guards misuse
            raise ContractError("tape context exited out of order")
        return False


class Tensor:
    """A dense float64 array plus gradient bookkeeping."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; the module-level functions do the real work.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def relu(self):
        return relu(self)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _BackwardContext:
    """Per-pass gradient scratchpad keyed by tensor identity."""

    def __init__(self):
        self._grads: dict[int, np.ndarray] = {}
        self._tensors: dict[int, Tensor] = {}

    def seed(self, t: Tensor) -> None:
        self._tensors[id(t)] = t
        self._grads[id(t)] = np.ones_like(t.data)

    def grad_of(self, t: Tensor):
        return self._grads.get(id(t))

    def add(self, t: Tensor, g: np.ndarray) -> None:
        key = id(t)
        buf = self._grads.get(key)
        if buf is None:
            self._tensors[key] = t
            # Copy: g may alias a slice of an upstream buffer.
            self._grads[key] = np.array(g, dtype=np.float64, copy=True)
        else:
            buf += g

    def finalize(self) -> None:
        for key, t in self._tensors.items():
            if t.requires_grad:
                t.accumulate_grad(self._grads[key])


def _record(out: Tensor, backward_fn) -> Tensor:
    """Register a backward closure when a tape is recording this output."""
    tape = active_tape()
    if tape is not None and out.requires_grad:
        def step(ctx: _BackwardContext):
            g = ctx.grad_of(out)
            if g is not None:
                backward_fn(g, ctx)

        tape.record(step)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data, requires_grad=a.requires_grad or b.requires_grad)

    def backward_fn(g, ctx):
        if a.requires_grad:
            ctx.add(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            ctx.add(b, _unbroadcast(g, b.data.shape))

    return _record(out, backward_fn)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data - b.data, requires_grad=a.requires_grad or b.requires_grad)

    def backward_fn(g, ctx):
        if a.requires_grad:
            ctx.add(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            ctx.add(b, _unbroadcast(-g, b.data.shape))

    return _record(out, backward_fn)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data * b.data, requires_grad=a.requires_grad or b.requires_grad)

    def backward_fn(g, ctx):
        if a.requires_grad:
            ctx.add(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            ctx.add(b, _unbroadcast(g * a.data, b.data.shape))

    return _record(out, backward_fn)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(
            f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}"
        )
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul inner dimensions disagree: {a.data.shape} @ {b.data.shape}"
        )
    out = Tensor(a.data @ b.data, requires_grad=a.requires_grad or b.requires_grad)

    def backward_fn(g, ctx):
        if a.requires_grad:
            ctx.add(a, g @ b.data.T)
        if b.requires_grad:
            ctx.add(b, a.data.T @ g)

    return _record(out, backward_fn)


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0.0
    mon = _kink_monitor()
    if mon is not None and a.data.size:
        mon.observe(np.abs(a.data).min())
    out = Tensor(np.where(mask, a.data, 0.0), requires_grad=a.requires_grad)

    def backward_fn(g, ctx):
        ctx.add(a, g * mask)

    return _record(out, backward_fn)


def sqrt(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data < 0.0):
        raise DomainError("sqrt of a negative value")
    root = np.sqrt(a.data)
    out = Tensor(root, requires_grad=a.requires_grad)

    def backward_fn(g, ctx):
        ctx.add(a, g * (0.5 / np.maximum(root, 1e-300)))

    return _record(out, backward_fn)


def concat(parts, axis: int = 0) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise EmptySetError("concat of zero tensors")
    out = Tensor(
        np.concatenate([p.data for p in parts], axis=axis),
        requires_grad=any(p.requires_grad for p in parts),
    )
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g, ctx):
        for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if part.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                ctx.add(part, g[tuple(idx)])

    return _record(out, backward_fn)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.data.reshape(shape), requires_grad=a.requires_grad)

    def backward_fn(g, ctx):
        ctx.add(a, g.reshape(a.data.shape))

    return _record(out, backward_fn)


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims), requires_grad=a.requires_grad)

    def backward_fn(g, ctx):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        ctx.add(a, np.broadcast_to(g, a.data.shape))

    return _record(out, backward_fn)


def gather_rows(a, rows) -> Tensor:
    """Select rows along the first axis; duplicate rows accumulate in backward."""
    a = _as_tensor(a)
    rows = np.asarray(rows, dtype=np.int64)
    n = a.data.shape[0]
    if rows.size and (rows.min() < 0 or rows.max() >= n):
        raise IndexError(f"gather_rows index out of range for {n} rows")
    out = Tensor(a.data[rows], requires_grad=a.requires_grad)

    def backward_fn(g, ctx):
        ga = np.zeros_like(a.data)
        np.add.at(ga, rows, g)
        ctx.add(a, ga)

    return _record(out, backward_fn)


def segment_sum(a, segment_ids, n_segments: int) -> Tensor:
    """Sum rows that share a segment id. Empty segments produce zero rows."""
    a = _as_tensor(a)
    seg = np.asarray(segment_ids, dtype=np.int64)
    if seg.shape != (a.data.shape[0],):
        raise DimensionError(
            f"segment_sum ids {seg.shape} do not match rows {a.data.shape}"
        )
    if seg.size and (seg.min() < 0 or seg.max() >= n_segments):
        raise IndexError(f"segment id out of range for {n_segments} segments")
    res = np.zeros((n_segments,) + a.data.shape[1:], dtype=np.float64)
    np.add.at(res, seg, a.data)
    out = Tensor(res, requires_grad=a.requires_grad)

    def backward_fn(g, ctx):
        ctx.add(a, g[seg])

    return _record(out, backward_fn)


def segment_max(a, segment_ids, n_segments: int, default: float = 0.0) -> Tensor:
    """Columnwise max per segment; ties route gradient to the lowest row index.

    Rows must be 2-D. Segments with no rows yield a constant ``default`` row
    and receive no gradient.
    """
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise DimensionError(f"segment_max expects 2-D rows, got {a.data.shape}")
    seg = np.asarray(segment_ids, dtype=np.int64)
    if seg.shape != (a.data.shape[0],):
        raise DimensionError(
            f"segment_max ids {seg.shape} do not match rows {a.data.shape}"
        )
    if seg.size and (seg.min() < 0 or seg.max() >= n_segments):
        raise IndexError(f"segment id out of range for {n_segments} segments")
    d = a.data.shape[1]
    res = np.full((n_segments, d), float(default), dtype=np.float64)
    argrows = np.full((n_segments, d), -1, dtype=np.int64)
    mon = _kink_monitor()
    for s in range(n_segments):
        rows = np.flatnonzero(seg == s)
        if rows.size == 0:
            continue
        block = a.data[rows]
        res[s] = block.max(axis=0)
        # np.argmax returns the first maximum, i.e. the lowest row index.
        argrows[s] = rows[np.argmax(block, axis=0)]
        if mon is not None and rows.size >= 2:
            runner_up = np.partition(block, -2, axis=0)[-2]
            mon.observe((res[s] - runner_up).min())
    out = Tensor(res, requires_grad=a.requires_grad)

    def backward_fn(g, ctx):
        ga = np.zeros_like(a.data)
        mask = argrows >= 0
        cols = np.broadcast_to(np.arange(d), argrows.shape)
        np.add.at(ga, (argrows[mask], cols[mask]), g[mask])
        ctx.add(a, ga)

    return _record(out, backward_fn)


def reduce_max_over_set(rows) -> Tensor:
    """Columnwise max over a set of rows; ties go to the lowest row index."""
    rows = _as_tensor(rows)
    if rows.data.ndim != 2:
        raise DimensionError(
            f"reduce_max_over_set expects n x d rows, got {rows.data.shape}"
        )
    n = rows.data.shape[0]
    if n == 0:
        raise EmptySetError("max reduction over an empty set of rows")
    out = segment_max(rows, np.zeros(n, dtype=np.int64), 1)
    return reshape(out, (rows.data.shape[1],))


def softmax_heads(a, heads: int) -> Tensor:
    """Softmax over feature positions within each contiguous head slice.

    ``a`` is [m, d] with d divisible by ``heads``; each length d/heads slice
    of every row sums to one.
    """
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise DimensionError(f"softmax_heads expects 2-D input, got {a.data.shape}")
    m, d = a.data.shape
    if heads < 1 or d % heads != 0:
        raise ConfigurationError(f"feature width {d} is not divisible by {heads} heads")
    z = a.data.reshape(m, heads, d // heads)
    z = z - z.max(axis=2, keepdims=True)
    ez = np.exp(z)
    s = ez / ez.sum(axis=2, keepdims=True)
    out = Tensor(s.reshape(m, d), requires_grad=a.requires_grad)

    def backward_fn(g, ctx):
        gr = g.reshape(m, heads, d // heads)
        inner = (gr * s).sum(axis=2, keepdims=True)
        ctx.add(a, (s * (gr - inner)).reshape(m, d))

    return _record(out, backward_fn)


def softmax_cross_entropy(logits, targets, weights=None) -> Tensor:
    """Mean negative log softmax probability of the target classes.

    Stabilized by per-row max subtraction. With ``weights`` (one scalar per
    class) the per-row losses are weighted and normalized by the sum of the
    applied weights.
    """
    logits = _as_tensor(logits)
    if logits.data.ndim != 2:
        raise DimensionError(
            f"cross entropy expects [batch, classes] logits, got {logits.data.shape}"
        )
    t = np.asarray(targets, dtype=np.int64)
    n, c = logits.data.shape
    if t.ndim != 1 or t.shape[0] != n:
        raise ContractError(f"target list shape {t.shape} does not match batch {n}")
    if n == 0:
        raise ContractError("cross entropy over an empty batch")
    if t.min() < 0 or t.max() >= c:
        raise IndexError(f"target class out of range for {c} classes")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    per_row = lse - z[np.arange(n), t]
    if weights is None:
        w = np.ones(n, dtype=np.float64)
    else:
        w_arr = np.asarray(weights, dtype=np.float64)
        if w_arr.shape != (c,):
            raise DimensionError(f"class weights {w_arr.shape} do not match {c} classes")
        w = w_arr[t]
    denom = w.sum()
    if denom <= 0.0:
        raise DomainError("class weights sum to zero over this batch")
    out = Tensor(
        np.array(float((w * per_row).sum() / denom)),
        requires_grad=logits.requires_grad,
    )

    def backward_fn(g, ctx):
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(n), t] -= 1.0
        ctx.add(logits, p * (w / denom)[:, None] * float(g))

    return _record(out, backward_fn)


def backward(loss: Tensor, tape: Tape) -> None:
    """Accumulate d(loss)/d(x) into every requires_grad tensor reached on ``tape``.

    ``loss`` must be scalar. Backward over an empty tape is a no-op apart
    from seeding the loss gradient itself.
    """
    if not isinstance(loss, Tensor):
        raise ContractError("backward expects a Tensor loss")
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    ctx = _BackwardContext()
    ctx.seed(loss)
    for step in reversed(tape._ops):
        step(ctx)
    ctx.finalize()


def zero_grads(tensors) -> None:
    for t in tensors:
        t.zero_grad()
