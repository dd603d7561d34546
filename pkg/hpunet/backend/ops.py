"""Spatial operations used by the segmentation network.

All maps are NCHW. Convolutions use stride 1 and zero "same" padding.
"""
from __future__ import annotations

from typing import Optional, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from hpunet.backend.rng import RngState
from hpunet.backend.tensor import Function, Tensor


def _windows(x: np.ndarray, k: int) -> np.ndarray:
    """Zero-pad by k//2 and return the (N, C, H, W, k, k) window view."""
    p = k // 2
    padded = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    return sliding_window_view(padded, (k, k), axis=(2, 3))


class _Conv2d(Function):
    def forward(self, x, kernel, bias):
        self.x, self.kernel = x, kernel
        k = kernel.shape[2]
        if k == 1:
            out = np.tensordot(kernel[:, :, 0, 0], x, axes=([1], [1])).transpose(1, 0, 2, 3)
        else:
            self.cols = _windows(x, k)
            # (N, H, W, Cout)
            out = np.tensordot(self.cols, kernel, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        return np.ascontiguousarray(out + bias[None, :, None, None])

    def backward(self, grad):
        kernel = self.kernel
        k = kernel.shape[2]
        grad_bias = grad.sum(axis=(0, 2, 3))
        if k == 1:
            grad_kernel = np.tensordot(grad, self.x, axes=([0, 2, 3], [0, 2, 3]))[:, :, None, None]
            grad_x = np.tensordot(kernel[:, :, 0, 0], grad, axes=([0], [1])).transpose(1, 0, 2, 3)
        else:
            grad_kernel = np.tensordot(grad, self.cols, axes=([0, 2, 3], [0, 2, 3]))
            flipped = kernel[:, :, ::-1, ::-1]
            grad_x = np.tensordot(_windows(grad, k), flipped,
                                  axes=([1, 4, 5], [0, 2, 3])).transpose(0, 3, 1, 2)
        return np.ascontiguousarray(grad_x), grad_kernel, grad_bias


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Same-padded 2-D convolution (cross-correlation), stride 1."""
    if x.ndim != 4 or kernel.ndim != 4:
        raise ValueError(f"conv2d expects NCHW input and OIkk kernel, got {x.shape} and {kernel.shape}")
    cout, cin, kh, kw = kernel.shape
    if x.shape[1] != cin:
        raise ValueError(f"conv2d: input has {x.shape[1]} channels, kernel expects {cin}")
    if kh != kw or kh % 2 == 0:
        raise ValueError(f"conv2d: kernel must be square with odd extent, got {kh}x{kw}")
    if bias.shape != (cout,):
        raise ValueError(f"conv2d: bias shape {bias.shape} does not match {cout} output channels")
    return _Conv2d.apply(x, kernel, bias)


class _AvgPool2x2(Function):
    def forward(self, x):
        # Pairwise sums keep avg_pool(upsample(x)) == x exact.
        return ((x[:, :, 0::2, 0::2] + x[:, :, 0::2, 1::2])
                + (x[:, :, 1::2, 0::2] + x[:, :, 1::2, 1::2])) * 0.25

    def backward(self, grad):
        return (np.repeat(np.repeat(grad, 2, axis=2), 2, axis=3) * 0.25,)


def avg_pool2x2(x: Tensor) -> Tensor:
    h, w = x.shape[2], x.shape[3]
    if h % 2 or w % 2:
        raise ValueError(f"avg_pool2x2 needs even spatial extents, got {h}x{w}")
    return _AvgPool2x2.apply(x)


class _UpsampleNN2x2(Function):
    def forward(self, x):
        return np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)

    def backward(self, grad):
        n, c, h, w = grad.shape
        return (grad.reshape(n, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5)),)


def upsample_nn2x2(x: Tensor) -> Tensor:
    return _UpsampleNN2x2.apply(x)


class _Concat(Function):
    def forward(self, a, b):
        self.split = a.shape[1]
        return np.concatenate([a, b], axis=1)

    def backward(self, grad):
        return (np.ascontiguousarray(grad[:, :self.split]),
                np.ascontiguousarray(grad[:, self.split:]))


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 4 or b.ndim != 4:
        raise ValueError(f"concat_channels expects NCHW tensors, got {a.shape} and {b.shape}")
    if (a.shape[0], a.shape[2], a.shape[3]) != (b.shape[0], b.shape[2], b.shape[3]):
        raise ValueError(f"concat_channels: batch/spatial mismatch {a.shape} vs {b.shape}")
    if a.kind != b.kind:
        raise ValueError(f"concat_channels: kind mismatch {a.kind} vs {b.kind}")
    return _Concat.apply(a, b)


class _Reparam(Function):
    def forward(self, mu, sigma, noise=None):
        self.noise = noise
        return mu + sigma * noise

    def backward(self, grad):
        return grad, grad * self.noise


def reparam_sample(mu: Tensor, sigma: Tensor, rng: Optional[RngState],
                   noise: Optional[np.ndarray] = None) -> Tensor:
    """mu + sigma * eps with eps ~ N(0, I); eps is a constant for gradients.

    `noise` replaces the draw from `rng` (zeros give back `mu`).
    """
    if mu.shape != sigma.shape:
        raise ValueError(f"reparam_sample: mu {mu.shape} and sigma {sigma.shape} differ")
    if np.any(sigma.data <= 0):
        raise ValueError("reparam_sample: sigma must be strictly positive")
    if noise is None:
        if rng is None:
            raise ValueError("reparam_sample needs an rng when no noise is given")
        noise = rng.normal(mu.shape, dtype=mu.data.dtype)
    else:
        noise = np.broadcast_to(np.asarray(noise, dtype=mu.data.dtype), mu.shape)
    return _Reparam.apply(mu, sigma, noise=noise)


class _SoftmaxCE(Function):
    def forward(self, logits, target=None, ignore=None):
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        total = e.sum(axis=1, keepdims=True)
        self.probs = e / total
        safe = np.where(ignore, 0, target) if ignore is not None else target
        self.target, self.ignore = safe, ignore
        picked = np.take_along_axis(shifted, safe[:, None], axis=1)[:, 0]
        ce = np.log(total[:, 0]) - picked
        if ignore is not None:
            ce = np.where(ignore, 0, ce).astype(logits.dtype)
        return ce

    def backward(self, grad):
        g = self.probs.copy()
        np.put_along_axis(g, self.target[:, None],
                          np.take_along_axis(g, self.target[:, None], axis=1) - 1, axis=1)
        g *= grad[:, None]
        if self.ignore is not None:
            g *= ~self.ignore[:, None]
        return (g,)


def softmax_ce_map(logits: Tensor, target: Union[Tensor, np.ndarray],
                   ignore: Optional[np.ndarray] = None) -> Tensor:
    """Per-pixel -log softmax(logits)[target]; ignored pixels give 0."""
    target = np.asarray(target.data if isinstance(target, Tensor) else target)
    n, c, h, w = logits.shape
    if target.shape != (n, h, w):
        raise ValueError(f"softmax_ce_map: target shape {target.shape} does not match logits {logits.shape}")
    ignore_mask = None if ignore is None else np.asarray(ignore, dtype=bool)
    valid = target if ignore_mask is None else target[~ignore_mask]
    if valid.size and (valid.min() < 0 or valid.max() >= c):
        raise ValueError(f"softmax_ce_map: target values must lie in [0, {c})")
    return _SoftmaxCE.apply(logits, target=target.astype(np.int64), ignore=ignore_mask)
