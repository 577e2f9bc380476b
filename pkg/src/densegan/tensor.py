"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations executed while a :class:`Tape` is active are recorded in program
order; :func:`backward` replays the tape in reverse, summing gradient
contributions whenever a tensor feeds more than one consumer.

    >>> x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = (x * x).sum()
    >>> backward(loss, tape)[x].data
    array([2., 4., 6.])
"""
from __future__ import annotations

import contextvars
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

_active_tape: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar(
    "densegan_active_tape", default=None
)


class Tensor:
    """N-dimensional float64 array with optional gradient tracking.

    ``data`` is treated as immutable by every op; optimizers swap in new
    arrays rather than writing through views.
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    # data is swapped wholesale by optimizers; keep it read-only
    def assign(self, value: np.ndarray) -> None:
        value = np.array(value, dtype=np.float64)
        if value.shape != self.data.shape:
            raise ValueError(f"cannot assign shape {value.shape} to tensor of shape {self.data.shape}")
        value.flags.writeable = False
        self.data = value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={list(self.shape)}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def sum(self, axis=None):
        return sum_(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


@dataclass
class _Node:
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]
    name: str


class Tape:
    """Ordered record of differentiable operations (define-by-run).

    Use as a context manager; ops record onto the innermost active tape.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._outputs: set[int] = set()
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _active_tape.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, name, inputs, output, backward_fn) -> None:
        self.nodes.append(_Node(tuple(inputs), output, backward_fn, name))
        self._outputs.add(id(output))

    def produced(self, t: Tensor) -> bool:
        return id(t) in self._outputs

    def leaves(self) -> list[Tensor]:
        seen: dict[int, Tensor] = {}
        for node in self.nodes:
            for t in node.inputs:
                if t.requires_grad and id(t) not in self._outputs:
                    seen.setdefault(id(t), t)
        return list(seen.values())


def active_tape() -> Tape | None:
    return _active_tape.get()


class no_grad:
    """Suspend recording (e.g. sampling fakes for a critic update)."""

    def __enter__(self):
        self._token = _active_tape.set(None)
        return self

    def __exit__(self, *exc):
        _active_tape.reset(self._token)


def make_op(name: str, out_data: np.ndarray, inputs: Sequence[Tensor], backward_fn) -> Tensor:
    """Wrap ``out_data`` as an op result and record it on the active tape.

    ``backward_fn`` maps the upstream gradient to one gradient (or ``None``)
    per input.
    """
    requires = any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    arr = np.asarray(out_data, dtype=np.float64)
    if arr.flags.writeable:
        arr.flags.writeable = False
    out.data = arr
    out.requires_grad = requires
    out.grad = None
    tape = _active_tape.get()
    if requires and tape is not None:
        tape.record(name, inputs, out, backward_fn)
    return out


def backward(loss: Tensor, tape: Tape) -> dict[Tensor, Tensor]:
    """Reverse-mode sweep of ``tape`` from scalar ``loss``.

    Returns ``{leaf: gradient}`` for every requires_grad leaf recorded on the
    tape; leaves that do not influence ``loss`` get zero gradients. Each
    leaf's ``.grad`` buffer is accumulated as well.
    """
    if loss.size != 1:
        raise ValueError("backward requires scalar")
    if not tape.produced(loss):
        raise ValueError("detached tensor")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        in_grads = node.backward(g)
        for t, gi in zip(node.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            if gi.shape != t.shape:
                raise RuntimeError(f"{node.name}: gradient shape {gi.shape} != input shape {t.shape}")
            prev = grads.get(id(t))
            grads[id(t)] = gi if prev is None else prev + gi

    result: dict[Tensor, Tensor] = {}
    for leaf in tape.leaves():
        g = grads.get(id(leaf))
        if g is None:
            g = np.zeros_like(leaf.data)
        result[leaf] = Tensor(g)
        leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
    return result


def finite_diff_grad(f: Callable[[Tensor], Tensor | float], x: Tensor, eps: float = 1e-5) -> Tensor:
    """Central-difference gradient of scalar ``f`` at ``x``; the reference oracle for :func:`backward`."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    base = np.array(x.data, dtype=np.float64)
    grad = np.zeros_like(base)
    flat = grad.reshape(-1)

    def evaluate(arr):
        with no_grad():
            val = f(Tensor(arr))
        val = float(val.item() if isinstance(val, Tensor) else val)
        if not np.isfinite(val):
            raise FloatingPointError("oracle evaluation failed")
        return val

    for i in range(base.size):
        plus = base.copy()
        plus.reshape(-1)[i] += eps
        minus = base.copy()
        minus.reshape(-1)[i] -= eps
        flat[i] = (evaluate(plus) - evaluate(minus)) / (2.0 * eps)
    return Tensor(grad)


# --- elementwise and structural ops -------------------------------------------------


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_op(
        "add",
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def neg(a: Tensor) -> Tensor:
    return make_op("neg", -a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_op(
        "mul",
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def power(a: Tensor, exponent: float) -> Tensor:
    p = float(exponent)
    return make_op("pow", a.data**p, (a,), lambda g: (g * p * a.data ** (p - 1),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return make_op("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return make_op("log", np.log(a.data), (a,), lambda g: (g / a.data,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return make_op("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def sum_(a: Tensor, axis=None) -> Tensor:
    out = a.data.sum(axis=axis)

    def bwd(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_op("sum", out, (a,), bwd)


def mean(a: Tensor, axis=None) -> Tensor:
    count = a.size if axis is None else a.shape[axis]
    return mul(sum_(a, axis), 1.0 / count)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    out = a.data.reshape(shape)
    return make_op("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return make_op(
        "matmul",
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def concat(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    if not xs:
        raise ValueError("concat of empty list")
    sizes = [x.shape[axis] for x in xs]
    bounds = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_op("concat", np.concatenate([x.data for x in xs], axis=axis), xs, bwd)


def take_rows(a: Tensor, start: int, stop: int) -> Tensor:
    """Slice ``a[start:stop]`` along the leading axis."""

    def bwd(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        return (full,)

    return make_op("take_rows", a.data[start:stop], (a,), bwd)


def log_softmax(a: Tensor) -> Tensor:
    """Row-wise log-softmax over the last axis of a 2-D tensor."""
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    soft = np.exp(out)
    return make_op(
        "log_softmax",
        out,
        (a,),
        lambda g: (g - soft * g.sum(axis=1, keepdims=True),),
    )
