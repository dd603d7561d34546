"""Elementwise and reduction operations.

Tensor-tensor operations require identical shapes; the only broadcasting
supported is against a Python scalar constant.
"""
from __future__ import annotations

from typing import Optional, Tuple, Union

import numpy as np

from hpunet.backend.tensor import Function, Tensor

Operand = Union[Tensor, float, int]


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


class _Add(Function):
    def forward(self, a, b):
        return a + b

    def backward(self, grad):
        return grad, grad


class _Shift(Function):
    def forward(self, a, value: float = 0.0):
        return a + value

    def backward(self, grad):
        return (grad,)


class _Mul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return grad * self.b, grad * self.a


class _Scale(Function):
    def forward(self, a, factor: float = 1.0):
        self.factor = factor
        return a * factor

    def backward(self, grad):
        return (grad * self.factor,)


class _Exp(Function):
    def forward(self, a):
        self.out = np.exp(a)
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class _Square(Function):
    def forward(self, a):
        self.a = a
        return a * a

    def backward(self, grad):
        return (2.0 * self.a * grad,)


class _Relu(Function):
    def forward(self, a):
        self.mask = a > 0
        return np.where(self.mask, a, 0).astype(a.dtype)

    def backward(self, grad):
        return (grad * self.mask,)


class _Clip(Function):
    def forward(self, a, lo: float = -np.inf, hi: float = np.inf):
        self.mask = (a >= lo) & (a <= hi)
        return np.clip(a, lo, hi)

    def backward(self, grad):
        return (grad * self.mask,)


class _Sum(Function):
    def forward(self, a, axis: Optional[Tuple[int, ...]] = None):
        self.shape = a.shape
        self.axis = axis
        return np.asarray(a.sum(axis=axis))

    def backward(self, grad):
        if self.axis is not None:
            grad = np.expand_dims(grad, tuple(sorted(a % len(self.shape) for a in self.axis)))
        return (np.broadcast_to(grad, self.shape).copy(),)


class _SliceChannels(Function):
    def forward(self, a, start: int = 0, stop: int = 0):
        self.shape, self.start, self.stop = a.shape, start, stop
        return np.ascontiguousarray(a[:, start:stop])

    def backward(self, grad):
        full = np.zeros(self.shape, dtype=grad.dtype)
        full[:, self.start:self.stop] = grad
        return (full,)


def add(a: Tensor, b: Operand) -> Tensor:
    if isinstance(b, Tensor):
        _same_shape(a, b, "add")
        return _Add.apply(a, b)
    return _Shift.apply(a, value=float(b))


def sub(a: Tensor, b: Operand) -> Tensor:
    if isinstance(b, Tensor):
        return add(a, neg(b))
    return _Shift.apply(a, value=-float(b))


def mul(a: Tensor, b: Operand) -> Tensor:
    if isinstance(b, Tensor):
        _same_shape(a, b, "mul")
        return _Mul.apply(a, b)
    return _Scale.apply(a, factor=float(b))


def neg(a: Tensor) -> Tensor:
    return _Scale.apply(a, factor=-1.0)


def exp(a: Tensor) -> Tensor:
    return _Exp.apply(a)


def square(a: Tensor) -> Tensor:
    return _Square.apply(a)


def relu(a: Tensor) -> Tensor:
    return _Relu.apply(a)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    return _Clip.apply(a, lo=lo, hi=hi)


def tsum(a: Tensor, axis: Optional[Tuple[int, ...]] = None) -> Tensor:
    return _Sum.apply(a, axis=axis)


def slice_channels(a: Tensor, start: int, stop: int) -> Tensor:
    if not 0 <= start < stop <= a.shape[1]:
        raise ValueError(f"slice_channels: invalid range [{start}, {stop}) for {a.shape[1]} channels")
    return _SliceChannels.apply(a, start=start, stop=stop)


def softmax(logits: np.ndarray, axis: int = 1) -> np.ndarray:
    """Numerically stable softmax over `axis` (no gradient)."""
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def one_hot(labels: np.ndarray, num_classes: int, ignore: Optional[np.ndarray] = None,
            dtype=np.float32) -> np.ndarray:
    """(N,H,W) integer labels -> (N,C,H,W); ignored pixels are all-zero."""
    labels = np.asarray(labels)
    out = (labels[:, None] == np.arange(num_classes)[None, :, None, None]).astype(dtype)
    if ignore is not None:
        out *= ~np.asarray(ignore, dtype=bool)[:, None]
    return out
