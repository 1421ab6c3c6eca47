"""Tensor carrier and the dynamic tape that records differentiable ops.

A forward pass executed inside ``with Tape() as tape:`` appends one node per
op whose inputs need gradients. ``tape.backward(loss)`` walks the nodes in
reverse recording order, which is a valid reverse topological order because
every node's inputs were created before it.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import ContractError, DimensionError

_DTYPE_STACK: list[type] = [np.float32]
_TAPE_STACK: list["Tape"] = []


def default_dtype():
    return _DTYPE_STACK[-1]


@contextlib.contextmanager
def precision(dtype):
    """Temporarily change the dtype new tensors are created with.

    Model code always runs in float32; finite-difference oracles use
    ``precision(np.float64)`` to evaluate the same graph in double precision.
    """
    _DTYPE_STACK.append(dtype)
    try:
        yield
    finally:
        _DTYPE_STACK.pop()


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        dt = default_dtype()
        if arr.dtype != dt:
            arr = arr.astype(dt)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name

    # -- metadata -------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- operator sugar (implementations live in ops.py) ------------------
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.index(self, index)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


@dataclass
class Node:
    inputs: tuple[Tensor, ...]
    out: Tensor
    backward: BackwardFn
    op: str


class Tape:
    """Ordered record of differentiable ops for one forward pass."""

    def __init__(self):
        self.nodes: list[Node] = []
        self._leaves: dict[int, Tensor] = {}
        self._produced: set[int] = set()

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self

    def record(self, op: str, inputs: tuple[Tensor, ...], out: Tensor, backward: BackwardFn) -> None:
        for t in inputs:
            if t.requires_grad and id(t) not in self._produced:
                self._leaves.setdefault(id(t), t)
        self.nodes.append(Node(inputs, out, backward, op))
        self._produced.add(id(out))

    def watch(self, *tensors: Tensor) -> None:
        for t in tensors:
            if id(t) not in self._produced:
                self._leaves.setdefault(id(t), t)

    @property
    def leaves(self) -> list[Tensor]:
        return list(self._leaves.values())

    def backward(self, loss: Tensor, wrt: Iterable[Tensor] | None = None) -> None:
        backward(loss, self, wrt)


def active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


@contextlib.contextmanager
def no_grad():
    """Suspend recording; ops inside produce constant tensors."""
    saved = list(_TAPE_STACK)
    _TAPE_STACK.clear()
    try:
        yield
    finally:
        _TAPE_STACK.extend(saved)


def make_result(op: str, data: np.ndarray, inputs: tuple[Tensor, ...], backward: BackwardFn) -> Tensor:
    """Wrap ``data`` as the output of ``op`` and record it if needed."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    tape = active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out.requires_grad = needs
    if needs:
        tape.record(op, inputs, out, backward)
    return out


def backward(loss: Tensor, tape: Tape | None = None, wrt: Iterable[Tensor] | None = None) -> None:
    """Populate ``.grad`` on leaves reachable from ``loss``.

    Leaf gradients are overwritten, not accumulated across calls, so running
    backward twice on one tape gives identical results. Within one call a
    tensor used along several paths receives the sum of path gradients.
    Leaves in ``wrt`` (default: every requires-grad leaf seen on the tape)
    that the loss does not depend on get a zero gradient.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = tape if tape is not None else active_tape()
    targets: list[Tensor] = list(wrt) if wrt is not None else (tape.leaves if tape else [])
    if loss.requires_grad and loss not in targets and tape is not None and id(loss) not in tape._produced:
        targets.append(loss)

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    if tape is not None:
        for node in reversed(tape.nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            in_grads = node.backward(g)
            for inp, gi in zip(node.inputs, in_grads):
                if gi is None or not inp.requires_grad:
                    continue
                if gi.shape != inp.shape:
                    raise DimensionError(
                        f"{node.op} backward produced grad {gi.shape} for input {inp.shape}"
                    )
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi

    for t in targets:
        g = grads.get(id(t))
        t.grad = np.zeros_like(t.data) if g is None else np.asarray(g, dtype=t.data.dtype)
