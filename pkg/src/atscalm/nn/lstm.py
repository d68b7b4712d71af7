"""LSTM cell built compositionally from the primitive ops, so gradients
through time come from the same reverse-mode machinery as everything else.

Gate layout in the fused weight matrices is (input, forget, candidate,
output) along the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..util import PipelineError
from .init import seeded_init
from .ops import add, concat, matmul, mul, sigmoid, split, tanh
from .tensor import Tensor


@dataclass
class LstmWeights:
    wx: Tensor   # (D, 4H)
    wh: Tensor   # (H, 4H)
    b: Tensor    # (1, 4H)

    @property
    def hidden(self) -> int:
        return self.wh.data.shape[0]

    @property
    def input_dim(self) -> int:
        return self.wx.data.shape[0]


def init_lstm(input_dim: int, hidden: int, seed, forget_bias: float = 1.0) -> LstmWeights:
    """Uniform(-r, r) with r = 1/sqrt(hidden); forget-gate bias raised to
    keep early memory open (standard trainability tweak)."""
    r = 1.0 / np.sqrt(hidden)
    wx = seeded_init((input_dim, 4 * hidden), "uniform", (seed, "wx"), r=r)
    wh = seeded_init((hidden, 4 * hidden), "uniform", (seed, "wh"), r=r)
    b = np.zeros((1, 4 * hidden))
    b[0, hidden : 2 * hidden] = forget_bias
    return LstmWeights(wx=wx, wh=wh, b=Tensor(b, requires_grad=True))


def lstm_param_count(input_dim: int, hidden: int) -> int:
    return 4 * hidden * (input_dim + hidden + 1)


def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor, w: LstmWeights) -> tuple[Tensor, Tensor]:
    """Single step: returns (h_t, c_t) for a batch.

    x (B,D), h_prev/c_prev (B,H). c_t = sigm(f)*c + sigm(i)*tanh(g),
    h_t = sigm(o)*tanh(c_t).
    """
    hid = w.hidden
    if x.data.ndim != 2 or x.data.shape[1] != w.input_dim:
        raise PipelineError(f"lstm_cell input {x.data.shape} does not match weights D={w.input_dim}")
    if h_prev.data.shape != (x.data.shape[0], hid) or c_prev.data.shape != h_prev.data.shape:
        raise PipelineError(
            f"lstm_cell state shapes {h_prev.data.shape}/{c_prev.data.shape} "
            f"do not match batch {x.data.shape[0]}, hidden {hid}"
        )
    z = add(add(matmul(x, w.wx), matmul(h_prev, w.wh)), w.b)
    gi, gf, gg, go = split(z, [hid, hid, hid, hid], axis=1)
    c_t = add(mul(sigmoid(gf), c_prev), mul(sigmoid(gi), tanh(gg)))
    h_t = mul(sigmoid(go), tanh(c_t))
    return h_t, c_t


def lstm_run(xs: list[Tensor], w: LstmWeights, reverse: bool = False) -> tuple[Tensor, Tensor]:
    """Run a sequence of (B,D) steps; returns the final (h, c)."""
    if not xs:
        raise PipelineError("lstm_run needs at least one step")
    batch = xs[0].data.shape[0]
    h = Tensor(np.zeros((batch, w.hidden)))
    c = Tensor(np.zeros((batch, w.hidden)))
    steps = reversed(xs) if reverse else xs
    for x in steps:
        h, c = lstm_cell(x, h, c, w)
    return h, c


def bilstm_final(xs: list[Tensor], fwd: LstmWeights, bwd: LstmWeights) -> Tensor:
    """Concatenated [forward final h, backward final h] -> (B, 2H)."""
    hf, _ = lstm_run(xs, fwd, reverse=False)
    hb, _ = lstm_run(xs, bwd, reverse=True)
    return concat([hf, hb], axis=1)
