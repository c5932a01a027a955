"""Dense tensors with a reverse-mode autodiff tape.

Operations live in :mod:`wavesep.ops`; they record themselves on the tape
that is active in the current context (see :class:`Tape`).  Outside a tape
nothing is recorded, which is the inference path.
"""

from __future__ import annotations

import contextlib
import contextvars
import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

_DTYPES = {"float64": np.float64, "float32": np.float32}
_precision: contextvars.ContextVar[type] = contextvars.ContextVar("precision", default=np.float64)
_active_tape: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar("tape", default=None)
_ids = itertools.count()


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ParameterError(ValueError):
    """An operator attribute is out of range."""


class ContractError(RuntimeError):
    """An API precondition was violated."""


def get_dtype() -> type:
    return _precision.get()


def set_precision(name: str) -> None:
    """Select the global float width: ``"float64"`` or ``"float32"``."""
    _precision.set(_DTYPES[name])


@contextlib.contextmanager
def precision(name: str) -> Iterator[None]:
    token = _precision.set(_DTYPES[name])
    try:
        yield
    finally:
        _precision.reset(token)


class Tensor:
    """An n-dimensional float buffer that may take part in differentiation.

    Leaves created with ``requires_grad=True`` carry a zero-initialised
    ``grad`` buffer that :func:`backward` accumulates into.
    """

    __slots__ = ("data", "grad", "requires_grad", "node_id", "is_leaf", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 dtype=None):
        arr = np.asarray(data, dtype=dtype or get_dtype())
        if not arr.flags.c_contiguous:
            arr = arr.copy()
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None
        self.node_id = next(_ids)
        self.is_leaf = True
        self.name = name

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

    def zero_grad(self) -> None:
        if self.requires_grad:
            if self.grad is None:
                self.grad = np.zeros_like(self.data)
            else:
                self.grad.fill(0)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.size == 1 else float("nan")

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag}, requires_grad={self.requires_grad})"

    def __add__(self, other: "Tensor") -> "Tensor":
        from wavesep import ops
        return ops.add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        from wavesep import ops
        return ops.sub(self, other)


GradFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


@dataclass
class TapeEntry:
    kind: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    grad_fn: GradFn
    attrs: dict = field(default_factory=dict)


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager; ops executed inside the block are appended in
    execution order, which is a valid topological order by construction.
    """

    def __init__(self) -> None:
        self.entries: list[TapeEntry] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _active_tape.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, kind: str, inputs: Sequence[Tensor], output: Tensor,
               grad_fn: GradFn, **attrs) -> None:
        self.entries.append(TapeEntry(kind, tuple(inputs), output, grad_fn, attrs))


def current_tape() -> Tape | None:
    return _active_tape.get()


@contextlib.contextmanager
def no_tape() -> Iterator[None]:
    token = _active_tape.set(None)
    try:
        yield
    finally:
        _active_tape.reset(token)


def make_result(kind: str, inputs: Sequence[Tensor], data: np.ndarray,
                grad_fn: GradFn, **attrs) -> Tensor:
    """Wrap an op's output and record it when any input needs a gradient."""
    tape = current_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = needs
    out.node_id = next(_ids)
    out.is_leaf = False
    out.name = None
    if needs:
        tape.record(kind, inputs, out, grad_fn, **attrs)
    return out


def backward(tape: Tape, loss: Tensor, retain_intermediate: bool = False) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``.

    Entries are visited in exact reverse recording order.  Intermediate
    gradients are dropped once consumed unless ``retain_intermediate``.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    pending: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    for entry in reversed(tape.entries):
        g = pending.pop(entry.output.node_id, None)
        if g is None:
            continue
        if retain_intermediate:
            entry.output.grad = g
        for inp, gi in zip(entry.inputs, entry.grad_fn(g)):
            if gi is None or not inp.requires_grad:
                continue
            if inp.is_leaf:
                if inp.grad is None:
                    inp.grad = np.zeros_like(inp.data)
                inp.grad += gi
            elif inp.node_id in pending:
                pending[inp.node_id] = pending[inp.node_id] + gi
            else:
                pending[inp.node_id] = gi
