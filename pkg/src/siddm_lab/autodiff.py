"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Tape-based: ops executed inside a ``with Graph():`` block are recorded in
execution order; ``backward`` replays the tape once in reverse.  The op set
is deliberately small (MLP training with GAN-style alternating updates) and
broadcasting is restricted to an explicit row-over-batch op so every
backward rule stays auditable.

Any op producing a NaN/Inf raises immediately; nothing non-finite is ever
propagated.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np


class AutodiffError(Exception):
    pass


class ShapeError(AutodiffError):
    pass


class NonFiniteError(AutodiffError):
    pass


class Tensor:
    """Dense float64 array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Arithmetic sugar; tensor-tensor ops require exactly matching shapes.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other):
        return scale(self, float(other))

    def __neg__(self):
        return scale(self, -1.0)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


class _Op:
    __slots__ = ("name", "inputs", "out", "backward", "needs")

    def __init__(self, name, inputs, out, backward, needs):
        self.name = name
        self.inputs = inputs
        self.out = out
        self.backward = backward
        # requires_grad snapshot at record time: freezing (see `frozen`) must
        # keep acting on this tape even after the flags are restored.
        self.needs = needs


_local = threading.local()


def _graph_stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = []
        _local.stack = stack
    return stack


def _active() -> "Graph":
    stack = _graph_stack()
    if not stack:
        raise AutodiffError("no active graph; build ops inside `with Graph():`")
    return stack[-1]


class Graph:
    """Ordered tape of recorded ops for one forward pass."""

    def __init__(self):
        self.ops: list[_Op] = []

    def __enter__(self):
        _graph_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _graph_stack().pop()
        return False

    def _record(self, name, inputs, out_data, backward, requires_grad=None) -> Tensor:
        # A finite sum proves all entries finite; only recheck elementwise
        # when the one-pass screen trips (inf/nan poison sums).
        if not np.isfinite(np.sum(out_data)) and not np.isfinite(out_data).all():
            raise NonFiniteError(f"non-finite output in op '{name}'")
        needs = tuple(t.requires_grad for t in inputs)
        if requires_grad is None:
            requires_grad = any(needs)
        out = Tensor(out_data, requires_grad=requires_grad)
        self.ops.append(_Op(name, inputs, out, backward, needs))
        return out


def backward(graph: Graph, loss: Tensor) -> None:
    """Populate ``.grad`` with d(loss)/d(tensor) by replaying the tape once
    in reverse.  Every requires_grad leaf on the graph gets a buffer (zeros
    when no path reaches the loss, e.g. behind a stop_gradient); reached
    intermediates get their gradient too, unreached ones keep grad=None.
    Overwrites any gradients from a previous call."""
    if loss.data.shape != ():
        raise AutodiffError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
    produced: set[int] = {id(op.out) for op in graph.ops}
    for op in reversed(graph.ops):
        go = grads.pop(id(op.out), None)
        if go is None or not op.out.requires_grad:
            continue
        op.out.grad = go
        in_grads = op.backward(go)
        for t, gin, need in zip(op.inputs, in_grads, op.needs):
            if gin is None or not need:
                continue
            acc = grads.get(id(t))
            grads[id(t)] = gin if acc is None else acc + gin
    # Leaves: graph inputs never produced by an op on this tape.
    for op in graph.ops:
        for t, need in zip(op.inputs, op.needs):
            if need and id(t) not in produced:
                g = grads.get(id(t))
                t.grad = g if g is not None else np.zeros_like(t.data)
                grads[id(t)] = t.grad


def _require_equal_shapes(name, a, b):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{name}: shape mismatch {a.data.shape} vs {b.data.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.data.shape} vs {b.data.shape}")
    na, nb = a.requires_grad, b.requires_grad

    def back(go):
        ga = go @ b.data.T if na else None
        gb = a.data.T @ go if nb else None
        return ga, gb

    return _active()._record("matmul", (a, b), a.data @ b.data, back)


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_equal_shapes("add", a, b)
    return _active()._record("add", (a, b), a.data + b.data, lambda go: (go, go))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_equal_shapes("sub", a, b)
    return _active()._record("sub", (a, b), a.data - b.data, lambda go: (go, -go))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_equal_shapes("mul", a, b)
    na, nb = a.requires_grad, b.requires_grad

    def back(go):
        ga = go * b.data if na else None
        gb = go * a.data if nb else None
        return ga, gb

    return _active()._record("mul", (a, b), a.data * b.data, back)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _active()._record("scale", (a,), a.data * c, lambda go: (go * c,))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    mask = np.where(a.data > 0.0, 1.0, slope)
    return _active()._record("leaky_relu", (a,), a.data * mask, lambda go: (go * mask,))


def sigmoid(a: Tensor) -> Tensor:
    e = np.exp(-np.abs(a.data))
    s = np.where(a.data >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _active()._record("sigmoid", (a,), s, lambda go: (go * s * (1.0 - s),))


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return _active()._record("log", (a,), out, lambda go: (go / a.data,))


def log_sigmoid(a: Tensor) -> Tensor:
    """log(sigmoid(x)), computed stably for large |x|."""
    out = -np.logaddexp(0.0, -a.data)

    def back(go):
        e = np.exp(-np.abs(a.data))
        s_neg = np.where(a.data >= 0.0, e / (1.0 + e), 1.0 / (1.0 + e))  # sigmoid(-x)
        return (go * s_neg,)

    return _active()._record("log_sigmoid", (a,), out, back)


def _expand(go, shape, axis):
    if axis is None:
        return np.broadcast_to(go, shape)
    return np.broadcast_to(np.expand_dims(go, axis), shape)


def vsum(a: Tensor, axis: int | None = None) -> Tensor:
    shape = a.data.shape
    return _active()._record(
        "sum", (a,), a.data.sum(axis=axis), lambda go: (_expand(go, shape, axis).copy(),)
    )


def vmean(a: Tensor, axis: int | None = None) -> Tensor:
    shape = a.data.shape
    count = a.data.size if axis is None else shape[axis]
    return _active()._record(
        "mean",
        (a,),
        a.data.mean(axis=axis),
        lambda go: (_expand(go, shape, axis) / count,),
    )


def sumsq(a: Tensor, axis: int | None = None) -> Tensor:
    """Squared-L2 reduction: sum of squares over all elements or one axis."""
    shape = a.data.shape
    return _active()._record(
        "sumsq",
        (a,),
        (a.data * a.data).sum(axis=axis),
        lambda go: (2.0 * a.data * _expand(go, shape, axis),),
    )


def concat(*tensors: Tensor) -> Tensor:
    """Concatenate 2-D tensors along the feature axis (axis 1)."""
    if not tensors:
        raise ShapeError("concat: needs at least one input")
    rows = tensors[0].data.shape[0]
    for t in tensors:
        if t.data.ndim != 2 or t.data.shape[0] != rows:
            raise ShapeError(
                f"concat: rows must match, got {[t.data.shape for t in tensors]}"
            )
    widths = [t.data.shape[1] for t in tensors]
    splits = np.cumsum(widths)[:-1]
    needs = [t.requires_grad for t in tensors]

    def back(go):
        parts = np.split(go, splits, axis=1)
        return tuple(p if need else None for p, need in zip(parts, needs))

    return _active()._record(
        "concat", tuple(tensors), np.concatenate([t.data for t in tensors], axis=1), back
    )


def broadcast_row(v: Tensor, n: int) -> Tensor:
    """Tile a 1-D row vector over a batch of n rows."""
    if v.data.ndim != 1:
        raise ShapeError(f"broadcast_row: expected 1-D vector, got shape {v.data.shape}")
    out = np.broadcast_to(v.data, (n, v.data.shape[0])).copy()
    return _active()._record("broadcast_row", (v,), out, lambda go: (go.sum(axis=0),))


def stop_gradient(a: Tensor) -> Tensor:
    return _active()._record(
        "stop_gradient", (a,), a.data.copy(), lambda go: (None,), requires_grad=False
    )


@contextmanager
def frozen(*params):
    """Temporarily clear requires_grad on tensors (or dicts of tensors).

    Ops recorded while a tensor is frozen treat it as a constant, so a
    later backward leaves its grad untouched — the mechanism behind
    GAN-style alternating updates."""
    tensors = []
    for p in params:
        tensors.extend(p.values() if isinstance(p, dict) else [p])
    saved = [t.requires_grad for t in tensors]
    for t in tensors:
        t.requires_grad = False
    try:
        yield
    finally:
        for t, flag in zip(tensors, saved):
            t.requires_grad = flag


class AdamState:
    """Per-parameter first/second moment buffers with a shared step counter."""

    def __init__(self, params: dict[str, Tensor], beta1: float = 0.5,
                 beta2: float = 0.9, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              state: AdamState, lr: float) -> None:
    """Standard Adam update with bias correction, in place on params."""
    if lr <= 0:
        raise ValueError(f"lr must be positive, got {lr}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.data.shape:
            raise ShapeError(
                f"adam_step: grad shape {g.shape} != param shape {p.data.shape} for '{name}'"
            )
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def grad_check(f, points: list[np.ndarray], h: float = 1e-4, tol: float = 1e-5) -> dict:
    """Compare analytic gradients of a scalar-valued graph builder against
    central finite differences.

    ``f`` takes a list of Tensors (one per entry of ``points``) and returns a
    scalar Tensor; it is invoked under graphs managed here.  Relative error
    is used componentwise, falling back to absolute error when both analytic
    and numeric values are below 1e-8 in magnitude.
    """
    leaves = [tensor(p, requires_grad=True) for p in points]
    with Graph() as g:
        loss = f(leaves)
    backward(g, loss)
    analytic = [t.grad.copy() for t in leaves]
    for a in analytic:
        if not np.isfinite(a).all():
            raise NonFiniteError("non-finite analytic gradient")

    def eval_at(pts):
        with Graph():
            return float(f([tensor(p) for p in pts]).data)

    max_rel = 0.0
    base = [np.array(p, dtype=np.float64) for p in points]
    for i, p in enumerate(base):
        flat = p.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = eval_at(base)
            flat[j] = orig - h
            down = eval_at(base)
            flat[j] = orig
            numeric = (up - down) / (2.0 * h)
            if not np.isfinite(numeric):
                raise NonFiniteError("non-finite numeric gradient")
            a = analytic[i].reshape(-1)[j]
            denom = max(abs(a), abs(numeric))
            err = abs(a - numeric) if denom < 1e-8 else abs(a - numeric) / denom
            max_rel = max(max_rel, err)
    return {"max_rel_err": max_rel, "pass": max_rel <= tol}
