"""Dense tensors and the tape that differentiates them.

Operations are `Function` subclasses. Applying one while a `Tape` is active
(and at least one input requires gradients) records a `Node`; `backward`
then replays the recorded nodes in reverse.
"""
from __future__ import annotations

import logging
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from hpunet.errors import TapeError

logger = logging.getLogger(__name__)

ELEMENT_KINDS: Dict[str, np.dtype] = {
    "float32": np.dtype(np.float32),
    "float64": np.dtype(np.float64),
    "uint8": np.dtype(np.uint8),
    "int32": np.dtype(np.int32),
}
FLOAT_KINDS = ("float32", "float64")

ArrayLike = Union[np.ndarray, float, int, Sequence[Any]]

_local = threading.local()


def _normalize(data: ArrayLike, dtype: Optional[Any]) -> np.ndarray:
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype == np.bool_:
        arr = arr.astype(np.uint8)
    elif arr.dtype.kind in "iu" and arr.dtype not in (ELEMENT_KINDS["uint8"], ELEMENT_KINDS["int32"]):
        arr = arr.astype(np.int32)
    if arr.dtype not in ELEMENT_KINDS.values():
        raise TypeError(f"Unsupported element kind: {arr.dtype}")
    return np.ascontiguousarray(arr)


class Tensor:
    """Row-major array with an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: Optional[str] = None,
        dtype: Optional[Any] = None,
    ) -> None:
        self.data: np.ndarray = _normalize(data, dtype)
        if requires_grad and self.kind not in FLOAT_KINDS:
            raise ValueError(
                f"Tensor of kind {self.kind} cannot require gradients")
        self.requires_grad: bool = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def kind(self) -> str:
        return self.data.dtype.name

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def astype(self, dtype: Any) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad, name=self.name)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, kind={self.kind}, requires_grad={self.requires_grad}{label})"

    # Arithmetic is forwarded to hpunet.backend.functional
    def __add__(self, other: Union["Tensor", float]) -> "Tensor":
        from hpunet.backend import functional as F
        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other: Union["Tensor", float]) -> "Tensor":
        from hpunet.backend import functional as F
        return F.sub(self, other)

    def __rsub__(self, other: float) -> "Tensor":
        from hpunet.backend import functional as F
        return F.add(F.neg(self), other)

    def __mul__(self, other: Union["Tensor", float]) -> "Tensor":
        from hpunet.backend import functional as F
        return F.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other: float) -> "Tensor":
        from hpunet.backend import functional as F
        if isinstance(other, Tensor):
            raise TypeError("Division is only defined by a constant")
        return F.mul(self, 1.0 / other)

    def __neg__(self) -> "Tensor":
        from hpunet.backend import functional as F
        return F.neg(self)


class Function(ABC):
    """Base class for differentiable operations.

    `forward` receives the input arrays (plus keyword constants) and returns
    the output array, saving on `self` whatever `backward` needs. `backward`
    receives dL/d(output) and returns one gradient (or None) per input.
    """

    @abstractmethod
    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError

    @abstractmethod
    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError

    @property
    def op(self) -> str:
        return type(self).__name__.lstrip("_").lower()

    @classmethod
    def apply(cls, *tensors: Tensor, **kwargs: Any) -> Tensor:
        func = cls()
        out = Tensor(func.forward(*(t.data for t in tensors), **kwargs))
        tape = current_tape()
        if tape is not None and any(t.requires_grad for t in tensors):
            out.requires_grad = True
            tape.record(Node(func, tuple(tensors), out))
        return out


@dataclass(frozen=True)
class Node:
    fn: Function
    inputs: Tuple[Tensor, ...]
    output: Tensor

    @property
    def op(self) -> str:
        return self.fn.op


class Tape:
    """Ordered record of differentiable operations.

    Nodes are appended in execution order, so the list is topologically
    sorted. Use as a context manager to make it the active tape of the
    current thread.
    """

    def __init__(self) -> None:
        self.nodes: List[Node] = []

    def record(self, node: Node) -> None:
        self.nodes.append(node)

    def __len__(self) -> int:
        return len(self.nodes)

    def __enter__(self) -> "Tape":
        stack = getattr(_local, "stack", None)
        if stack is None:
            stack = _local.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc: Any) -> None:
        _local.stack.pop()

    def backward(self, loss: Tensor, parameters: Iterable[Tensor] = ()) -> None:
        """Populate `.grad` on every leaf tensor that requires gradients.

        Tensors in `parameters` that the loss does not depend on receive a
        zero gradient.
        """
        if loss.size != 1:
            raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not any(node.output is loss for node in self.nodes):
            raise TapeError("loss was not produced on this tape")

        produced = {id(node.output) for node in self.nodes}
        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: Dict[int, Tensor] = {}

        for node in reversed(self.nodes):
            for t in node.inputs:
                if t.requires_grad and id(t) not in produced:
                    leaves[id(t)] = t
            out_grad = grads.pop(id(node.output), None)
            if out_grad is None:
                continue
            for t, g in zip(node.inputs, node.fn.backward(out_grad)):
                if g is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g

        for key, leaf in leaves.items():
            g = grads.get(key)
            leaf.grad = np.zeros_like(leaf.data) if g is None else g.astype(leaf.data.dtype, copy=False)
        for p in parameters:
            if id(p) not in leaves:
                p.grad = np.zeros_like(p.data)
        logger.debug("backward visited %d nodes, %d leaves", len(self.nodes), len(leaves))


def current_tape() -> Optional[Tape]:
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


def backward(loss: Tensor, tape: Tape, parameters: Iterable[Tensor] = ()) -> None:
    tape.backward(loss, parameters)
