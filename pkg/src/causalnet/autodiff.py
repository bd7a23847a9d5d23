"""Dense float64 tensors with reverse-mode automatic differentiation.

A ``Tape`` records every primitive applied to tensors created on it, in
execution order (which is therefore topological). ``backward`` walks the
record once in reverse, accumulating adjoints. Tapes are cheap, single-use
objects: build one per forward pass and discard it after ``backward``.

Tensors are never mutated in place once recorded; every primitive returns a
fresh tensor. Tensors without a tape are plain immutable values and all
primitives work on them too (the result simply carries no gradient record).
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tape",
    "Tensor",
    "ShapeError",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "affine",
    "concat",
    "transpose_last2",
    "broadcast_to",
    "reshape",
    "tsum",
    "tmean",
    "sigmoid",
    "tanh",
    "relu",
    "tabs",
    "backward",
    "grad_check",
    "GradCheckResult",
    "set_finite_checks",
]

# When enabled, every primitive asserts its forward value is finite. Off by
# default: the scan roughly doubles the cost of small ops.
_CHECK_FINITE = False


def set_finite_checks(enabled: bool) -> None:
    global _CHECK_FINITE
    _CHECK_FINITE = bool(enabled)


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested primitive."""


class Tape:
    """Ordered record of primitives for one forward/backward pass.

    A tape is confined to a single thread. Distinct tapes never share
    state, so independent passes may run concurrently.
    """

    def __init__(self) -> None:
        self._parents: list[tuple[int, ...]] = []
        self._backward_fns: list[Callable[[np.ndarray], Sequence[np.ndarray | None]] | None] = []

    def __len__(self) -> int:
        return len(self._parents)

    def _record(
        self,
        parents: tuple[int, ...],
        backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None,
    ) -> int:
        self._parents.append(parents)
        self._backward_fns.append(backward_fn)
        return len(self._parents) - 1

    def tensor(self, data) -> "Tensor":
        """Create a leaf tensor watched by this tape."""
        return Tensor(data, tape=self)


class Tensor:
    """Immutable dense float64 array, optionally recorded on a tape."""

    __slots__ = ("data", "tape", "nid")

    def __init__(self, data, tape: Tape | None = None, _nid: int | None = None):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.tape = tape
        if tape is not None and _nid is None:
            _nid = tape._record((), None)
        self.nid = _nid

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        taped = "taped" if self.tape is not None else "const"
        return f"Tensor(shape={self.shape}, {taped})"

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __matmul__(self, other):
        return matmul(self, _lift(other))

    def __neg__(self):
        return neg(self)


def _lift(x) -> Tensor:
    return x if type(x) is Tensor else Tensor(x)


def _shared_tape(op: str, tensors) -> Tape | None:
    tape = None
    for t in tensors:
        tt = t.tape
        if tt is None:
            continue
        if tape is None:
            tape = tt
        elif tape is not tt:
            raise ValueError(f"{op}: operands recorded on two different tapes")
    return tape


def _make(
    op: str,
    value: np.ndarray,
    inputs: Sequence[Tensor],
    backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]],
) -> Tensor:
    if _CHECK_FINITE and not np.all(np.isfinite(value)):
        raise FloatingPointError(f"{op}: non-finite value in forward result")
    out = Tensor.__new__(Tensor)
    out.data = value
    tape = _shared_tape(op, inputs)
    if tape is None:
        out.tape = None
        out.nid = None
        return out
    parents = tuple(-1 if t.tape is None else t.nid for t in inputs)
    out.tape = tape
    out.nid = tape._record(parents, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, inverting numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    try:
        value = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from None

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make("add", value, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    try:
        value = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape} do not broadcast") from None

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make("sub", value, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard (elementwise) product with numpy broadcasting."""
    a, b = _lift(a), _lift(b)
    try:
        value = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast") from None
    ad, bd = a.data, b.data

    def bw(g):
        return _unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape)

    return _make("mul", value, (a, b), bw)


def div(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    try:
        value = a.data / b.data
    except ValueError:
        raise ShapeError(f"div: shapes {a.shape} and {b.shape} do not broadcast") from None
    ad, bd = a.data, b.data

    def bw(g):
        return (
            _unbroadcast(g / bd, a.shape),
            _unbroadcast(-g * ad / (bd * bd), b.shape),
        )

    return _make("div", value, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    a = _lift(a)
    return _make("neg", -a.data, (a,), lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = _lift(a), _lift(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-d, got {a.shape} and {b.shape}")
    try:
        value = a.data @ b.data
    except ValueError:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform") from None
    ad, bd = a.data, b.data

    def bw(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make("matmul", value, (a, b), bw)


def affine(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x @ w + b, the usual linear-layer map."""
    out = matmul(x, w)
    return out if b is None else add(out, b)


def concat(tensors: Iterable[Tensor], axis: int = -1) -> Tensor:
    ts = [_lift(t) for t in tensors]
    if not ts:
        raise ValueError("concat: need at least one tensor")
    nd = ts[0].ndim
    ax = axis if axis >= 0 else axis + nd
    for t in ts[1:]:
        if t.ndim != nd:
            raise ShapeError(f"concat: ranks differ, {ts[0].shape} vs {t.shape}")
        for i in range(nd):
            if i != ax and t.shape[i] != ts[0].shape[i]:
                raise ShapeError(f"concat: shapes {ts[0].shape} and {t.shape} differ off axis {ax}")
    value = np.concatenate([t.data for t in ts], axis=ax)
    sizes = [t.shape[ax] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        return tuple(
            np.take(g, np.arange(offsets[i], offsets[i + 1]), axis=ax) for i in range(len(ts))
        )

    return _make("concat", value, ts, bw)


def transpose_last2(a: Tensor) -> Tensor:
    a = _lift(a)
    if a.ndim < 2:
        raise ShapeError(f"transpose_last2: need at least 2-d, got {a.shape}")
    value = np.swapaxes(a.data, -1, -2)
    return _make("transpose_last2", value, (a,), lambda g: (np.swapaxes(g, -1, -2),))


def broadcast_to(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    a = _lift(a)
    try:
        value = np.broadcast_to(a.data, shape).copy()
    except ValueError:
        raise ShapeError(f"broadcast_to: cannot broadcast {a.shape} to {shape}") from None
    return _make("broadcast_to", value, (a,), lambda g: (_unbroadcast(g, a.shape),))


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    a = _lift(a)
    try:
        value = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}") from None
    old = a.shape
    return _make("reshape", value, (a,), lambda g: (g.reshape(old),))


def tsum(a: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    value = a.data.sum(axis=axis, keepdims=keepdims)
    shape = a.shape

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2, shape).copy(),)

    return _make("sum", np.asarray(value, dtype=np.float64), (a,), bw)


def tmean(a: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    value = a.data.mean(axis=axis, keepdims=keepdims)
    shape = a.shape
    count = a.size if axis is None else a.size // np.asarray(value).size

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy() / count,)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2, shape).copy() / count,)

    return _make("mean", np.asarray(value, dtype=np.float64), (a,), bw)


def sigmoid(a: Tensor) -> Tensor:
    a = _lift(a)
    # Branch on sign to avoid overflow in exp.
    x = a.data
    value = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def bw(g):
        return (g * value * (1.0 - value),)

    return _make("sigmoid", value, (a,), bw)


def tanh(a: Tensor) -> Tensor:
    a = _lift(a)
    value = np.tanh(a.data)

    def bw(g):
        return (g * (1.0 - value * value),)

    return _make("tanh", value, (a,), bw)


def relu(a: Tensor) -> Tensor:
    """max(x, 0); the derivative at exactly 0 is defined as 0."""
    a = _lift(a)
    value = np.maximum(a.data, 0.0)
    positive = a.data > 0

    def bw(g):
        return (g * positive,)

    return _make("relu", value, (a,), bw)


def tabs(a: Tensor) -> Tensor:
    """|x|; the derivative at exactly 0 is defined as 0."""
    a = _lift(a)
    value = np.abs(a.data)
    sign = np.sign(a.data)

    def bw(g):
        return (g * sign,)

    return _make("abs", value, (a,), bw)


# ---------------------------------------------------------------------------
# reverse pass


class Gradients:
    """Gradients of one scalar loss, keyed by the tensors of its tape."""

    def __init__(self, by_nid: dict[int, np.ndarray]):
        self._by_nid = by_nid

    def __contains__(self, t: Tensor) -> bool:
        return t.nid in self._by_nid

    def __getitem__(self, t: Tensor) -> np.ndarray:
        if t.nid is None or t.nid not in self._by_nid:
            raise KeyError("tensor has no gradient on this tape")
        return self._by_nid[t.nid]

    def get(self, t: Tensor, default=None):
        if t.nid is None:
            return default
        return self._by_nid.get(t.nid, default)


def backward(loss: Tensor) -> Gradients:
    """Accumulate d(loss)/d(tensor) for every tensor on the loss's tape.

    The loss must be a scalar (size 1) recorded on a tape. Each recorded
    node is visited exactly once, in reverse execution order.
    """
    if loss.tape is None:
        raise ValueError("backward: loss is not recorded on a tape")
    if loss.size != 1:
        raise ValueError(f"backward: loss must be a scalar, got shape {loss.shape}")
    tape = loss.tape
    grads: dict[int, np.ndarray] = {loss.nid: np.ones_like(loss.data)}
    for nid in range(loss.nid, -1, -1):
        g = grads.get(nid)
        if g is None:
            continue
        fn = tape._backward_fns[nid]
        if fn is None:
            continue
        parent_grads = fn(g)
        for pid, pg in zip(tape._parents[nid], parent_grads):
            if pid < 0 or pg is None:
                continue
            acc = grads.get(pid)
            grads[pid] = pg if acc is None else acc + pg
    return Gradients(grads)


# ---------------------------------------------------------------------------
# finite-difference verification


class GradCheckResult:
    __slots__ = ("max_rel_err", "checked", "excluded")

    def __init__(self, max_rel_err: float, checked: int, excluded: int):
        self.max_rel_err = max_rel_err
        self.checked = checked
        self.excluded = excluded

    def __repr__(self) -> str:
        return (
            f"GradCheckResult(max_rel_err={self.max_rel_err:.3e}, "
            f"checked={self.checked}, excluded={self.excluded})"
        )


def grad_check(
    f: Callable[[list[Tensor]], Tensor],
    params: Sequence[np.ndarray],
    eps: float = 1e-5,
) -> GradCheckResult:
    """Compare the taped gradient of ``f`` against central finite differences.

    ``f`` receives a list of leaf tensors (one per entry of ``params``) and
    must return a scalar tensor. Every parameter entry is perturbed by
    ``±eps``. The relative error per entry is
    ``|analytic - numeric| / max(1, |analytic|, |numeric|)``.

    Entries where the two one-sided difference quotients disagree strongly
    are excluded: such disagreement marks a kink (e.g. relu evaluated at
    exactly 0) where no two-sided derivative exists.
    """
    if not (1e-7 <= eps <= 1e-4):
        raise ValueError(f"grad_check: eps {eps} outside [1e-7, 1e-4]")
    params = [np.asarray(p, dtype=np.float64) for p in params]

    tape = Tape()
    leaves = [tape.tensor(p) for p in params]
    loss = f(leaves)
    base = loss.item()
    if not np.isfinite(base):
        raise FloatingPointError("grad_check: non-finite loss at the base point")
    grads = backward(loss)
    # A parameter the loss never touches has gradient 0.
    analytic = [grads.get(leaf, np.zeros_like(p)) for leaf, p in zip(leaves, params)]

    def eval_at(ps: list[np.ndarray]) -> float:
        out = f([Tensor(p) for p in ps])
        v = out.item()
        if not np.isfinite(v):
            raise FloatingPointError("grad_check: non-finite loss at a perturbed point")
        return v

    max_rel = 0.0
    checked = 0
    excluded = 0
    work = [q.copy() for q in params]
    for k, p in enumerate(params):
        wf = work[k].reshape(-1)
        for i in range(wf.size):
            orig = wf[i]
            wf[i] = orig + eps
            f_plus = eval_at(work)
            wf[i] = orig - eps
            f_minus = eval_at(work)
            wf[i] = orig
            central = (f_plus - f_minus) / (2.0 * eps)
            fwd = (f_plus - base) / eps
            bwd = (base - f_minus) / eps
            # One-sided slopes that disagree beyond curvature noise mark a
            # kink crossed inside [x-eps, x+eps]; skip the entry.
            gap = abs(fwd - bwd)
            scale = max(1.0, abs(fwd), abs(bwd))
            if gap > 0.5 * scale:
                excluded += 1
                continue
            a = analytic[k].reshape(-1)[i]
            rel = abs(a - central) / max(1.0, abs(a), abs(central))
            if rel > max_rel:
                max_rel = rel
            checked += 1
    return GradCheckResult(max_rel, checked, excluded)
