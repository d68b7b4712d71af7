"""Differentiable operator set: elementwise, matmul, conv2d, pooling,
batchnorm, dropout, softmax cross-entropy. Each op returns a new Tensor
whose closure accumulates gradients into its parents."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..util import PipelineError
from .tensor import Tensor, as_tensor, unbroadcast


def _binary(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return a, b, a.requires_grad or b.requires_grad


def add(a, b) -> Tensor:
    a, b, rg = _binary(a, b)
    out = Tensor(a.data + b.data, rg, (a, b))

    def backward():
        a.accumulate(unbroadcast(out.grad, a.data.shape))
        b.accumulate(unbroadcast(out.grad, b.data.shape))

    out._backward = backward
    return out


def sub(a, b) -> Tensor:
    a, b, rg = _binary(a, b)
    out = Tensor(a.data - b.data, rg, (a, b))

    def backward():
        a.accumulate(unbroadcast(out.grad, a.data.shape))
        b.accumulate(unbroadcast(-out.grad, b.data.shape))

    out._backward = backward
    return out


def mul(a, b) -> Tensor:
    a, b, rg = _binary(a, b)
    out = Tensor(a.data * b.data, rg, (a, b))

    def backward():
        a.accumulate(unbroadcast(out.grad * b.data, a.data.shape))
        b.accumulate(unbroadcast(out.grad * a.data, b.data.shape))

    out._backward = backward
    return out


def scale(a, s: float) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data * s, a.requires_grad, (a,))

    def backward():
        a.accumulate(out.grad * s)

    out._backward = backward
    return out


def matmul(a, b) -> Tensor:
    a, b, rg = _binary(a, b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise PipelineError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data, rg, (a, b))

    def backward():
        a.accumulate(out.grad @ b.data.T)
        b.accumulate(a.data.T @ out.grad)

    out._backward = backward
    return out


def ssum(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.sum(a.data), a.requires_grad, (a,))

    def backward():
        a.accumulate(np.full_like(a.data, out.grad))

    out._backward = backward
    return out


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.maximum(a.data, 0.0), a.requires_grad, (a,))

    def backward():
        a.accumulate(out.grad * (a.data > 0.0))  # subgradient 0 at the kink

    out._backward = backward
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    pos = x >= 0
    out = np.empty_like(x)
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = _sigmoid(a.data)
    out = Tensor(y, a.requires_grad, (a,))

    def backward():
        a.accumulate(out.grad * y * (1.0 - y))

    out._backward = backward
    return out


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    out = Tensor(y, a.requires_grad, (a,))

    def backward():
        a.accumulate(out.grad * (1.0 - y * y))

    out._backward = backward
    return out


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    rg = any(t.requires_grad for t in tensors)
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), rg, tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]

    def backward():
        offset = 0
        for t, n in zip(tensors, sizes):
            sl = [slice(None)] * out.data.ndim
            sl[axis] = slice(offset, offset + n)
            t.accumulate(out.grad[tuple(sl)])
            offset += n

    out._backward = backward
    return out


def split(a, sizes, axis: int = 0) -> list[Tensor]:
    a = as_tensor(a)
    if sum(sizes) != a.data.shape[axis]:
        raise PipelineError(f"split sizes {sizes} do not cover axis {axis} of {a.data.shape}")
    outs = []
    offset = 0
    for n in sizes:
        sl = [slice(None)] * a.data.ndim
        sl[axis] = slice(offset, offset + n)
        sl = tuple(sl)
        piece = Tensor(a.data[sl].copy(), a.requires_grad, (a,))

        def backward(piece=piece, sl=sl):
            if a.requires_grad:
                if a.grad is None:
                    a.grad = np.zeros_like(a.data)
                a.grad[sl] += piece.grad

        piece._backward = backward
        outs.append(piece)
        offset += n
    return outs


def conv2d(x, w, b=None, stride: int = 1, pad: int = 0) -> Tensor:
    """2-d cross-correlation: x (N,C,H,W), w (O,C,kh,kw), optional bias (O,)."""
    x, w = as_tensor(x), as_tensor(w)
    if x.data.ndim != 4 or w.data.ndim != 4 or x.data.shape[1] != w.data.shape[1]:
        raise PipelineError(f"conv2d shape mismatch: x {x.data.shape}, w {w.data.shape}")
    n, c, h, wd = x.data.shape
    o, _, kh, kw = w.data.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise PipelineError(f"conv2d output would be empty for input {x.data.shape}, kernel {w.data.shape}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]          # (N,C,Ho,Wo,kh,kw)
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n, ho * wo, c * kh * kw)
    wf = w.data.reshape(o, -1)
    y = (cols @ wf.T).transpose(0, 2, 1).reshape(n, o, ho, wo)
    if b is not None:
        b = as_tensor(b)
        y = y + b.data[None, :, None, None]
    parents = (x, w) if b is None else (x, w, b)
    rg = any(p.requires_grad for p in parents)
    out = Tensor(y, rg, parents)

    def backward():
        g = out.grad
        gf = g.transpose(0, 2, 3, 1).reshape(n, ho * wo, o)
        if w.requires_grad:
            dw = np.einsum("nlo,nlk->ok", gf, cols).reshape(w.data.shape)
            w.accumulate(dw)
        if b is not None and b.requires_grad:
            b.accumulate(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dcols = (gf @ wf).reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
            dxp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[:, :, i, j]
            x.accumulate(dxp[:, :, pad : pad + h, pad : pad + wd] if pad else dxp)

    out._backward = backward
    return out


def maxpool2d(x, kernel: int = 3, stride: int = 2, pad: int = 1) -> Tensor:
    x = as_tensor(x)
    n, c, h, w = x.data.shape
    ho = (h + 2 * pad - kernel) // stride + 1
    wo = (w + 2 * pad - kernel) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)), constant_values=-np.inf) if pad else x.data
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kernel, kernel), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride].reshape(n, c, ho, wo, kernel * kernel)
    arg = np.argmax(windows, axis=-1)
    y = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
    out = Tensor(y, x.requires_grad, (x,))

    def backward():
        if not x.requires_grad:
            return
        di, dj = np.unravel_index(arg, (kernel, kernel))
        ni, ci, hi, wi = np.indices((n, c, ho, wo))
        rows = hi * stride + di
        cols = wi * stride + dj
        dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
        np.add.at(dxp, (ni, ci, rows, cols), out.grad)
        x.accumulate(dxp[:, :, pad : pad + h, pad : pad + w] if pad else dxp)

    out._backward = backward
    return out


def global_avg_pool(x) -> Tensor:
    """(N,C,H,W) -> (N,C) spatial mean."""
    x = as_tensor(x)
    if x.data.ndim != 4:
        raise PipelineError(f"global_avg_pool expects NCHW, got {x.data.shape}")
    n, c, h, w = x.data.shape
    out = Tensor(x.data.mean(axis=(2, 3)), x.requires_grad, (x,))

    def backward():
        x.accumulate(np.broadcast_to(out.grad[:, :, None, None] / (h * w), x.data.shape))

    out._backward = backward
    return out


@dataclass
class BatchNormState:
    """Running statistics; arrays are plain buffers, not parameters."""

    mean: np.ndarray
    var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def for_channels(cls, c: int, momentum: float = 0.1, eps: float = 1e-5):
        return cls(mean=np.zeros(c), var=np.ones(c), momentum=momentum, eps=eps)


def batchnorm2d(x, gamma, beta, state: BatchNormState, train: bool) -> Tensor:
    """Channel-wise normalization over (N,H,W); biased batch variance.

    Train mode normalizes with the batch statistics and updates the running
    buffers; eval mode applies the frozen running statistics.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.data.ndim != 4 or gamma.data.shape != (x.data.shape[1],):
        raise PipelineError(f"batchnorm2d shape mismatch: x {x.data.shape}, gamma {gamma.data.shape}")
    axes = (0, 2, 3)
    m = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]
    if train:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        state.mean = (1.0 - state.momentum) * state.mean + state.momentum * mu
        state.var = (1.0 - state.momentum) * state.var + state.momentum * var
    else:
        mu, var = state.mean, state.var
    inv = 1.0 / np.sqrt(var + state.eps)
    xhat = (x.data - mu[None, :, None, None]) * inv[None, :, None, None]
    y = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]
    rg = x.requires_grad or gamma.requires_grad or beta.requires_grad
    out = Tensor(y, rg, (x, gamma, beta))

    def backward():
        g = out.grad
        gamma.accumulate((g * xhat).sum(axis=axes))
        beta.accumulate(g.sum(axis=axes))
        if not x.requires_grad:
            return
        gi = gamma.data[None, :, None, None] * inv[None, :, None, None]
        if train:
            mean_g = g.mean(axis=axes)[None, :, None, None]
            mean_gx = (g * xhat).mean(axis=axes)[None, :, None, None]
            x.accumulate(gi * (g - mean_g - xhat * mean_gx))
        else:
            x.accumulate(gi * g)

    out._backward = backward
    return out


def dropout(x, p: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: train-mode expectation equals the input."""
    if not (0.0 <= p < 1.0):
        raise PipelineError(f"dropout p must be in [0, 1), got {p}")
    x = as_tensor(x)
    if not train or p == 0.0:
        out = Tensor(x.data.copy(), x.requires_grad, (x,))

        def backward():
            x.accumulate(out.grad)

        out._backward = backward
        return out
    if rng is None:
        raise PipelineError("train-mode dropout needs an explicit rng")
    mask = (rng.random(x.data.shape) >= p) / (1.0 - p)
    out = Tensor(x.data * mask, x.requires_grad, (x,))

    def backward():
        x.accumulate(out.grad * mask)

    out._backward = backward
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_crossentropy(logits, targets) -> tuple[Tensor, np.ndarray]:
    """Mean cross-entropy over the batch; returns (loss, probabilities).

    ``targets`` is an int vector of class indices, shape (N,).
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.data.ndim != 2 or targets.shape != (logits.data.shape[0],):
        raise PipelineError(f"softmax_crossentropy shapes: logits {logits.data.shape}, targets {targets.shape}")
    probs = softmax(logits.data)
    n = logits.data.shape[0]
    picked = np.clip(probs[np.arange(n), targets], 1e-300, None)
    loss_val = -np.mean(np.log(picked))
    out = Tensor(loss_val, logits.requires_grad, (logits,))

    def backward():
        d = probs.copy()
        d[np.arange(n), targets] -= 1.0
        logits.accumulate(out.grad * d / n)

    out._backward = backward
    return out, probs


def linear(x, w, b=None) -> Tensor:
    """x (N,D) @ w (D,K) + b."""
    y = matmul(x, w)
    return add(y, b) if b is not None else y
