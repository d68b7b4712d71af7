"""Central finite-difference gradient verification.

The callable must rebuild its graph from the given parameter tensors on
every invocation and be deterministic (fix any dropout rng inside it).
"""

from __future__ import annotations

import numpy as np

from ..util import PipelineError, keyed_rng
from .tensor import Tensor


def grad_check(f, params: list[Tensor], eps: float = 1e-5,
               sample_per_tensor: int | None = None, seed: int = 0) -> float:
    """Max over checked elements of |analytic - numeric| / max(1, |a|, |n|).

    With ``sample_per_tensor`` only a seeded subset of each tensor's
    elements is perturbed; otherwise every element is checked.
    """
    for p in params:
        p.zero_grad()
    loss = f()
    if not np.isfinite(loss.data):
        raise PipelineError("non-finite loss in grad_check")
    loss.backward()
    analytic = []
    for p in params:
        if p.grad is None:
            analytic.append(np.zeros_like(p.data))
        else:
            if not np.all(np.isfinite(p.grad)):
                raise PipelineError("non-finite gradient detected")
            analytic.append(p.grad.copy())

    rng = keyed_rng("gradcheck", seed)
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        n_el = flat.size
        if sample_per_tensor is None or n_el <= sample_per_tensor:
            idxs = np.arange(n_el)
        else:
            idxs = rng.choice(n_el, size=sample_per_tensor, replace=False)
        aflat = a.reshape(-1)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(f().data)
            flat[i] = orig - eps
            lo = float(f().data)
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * eps)
            err = abs(aflat[i] - numeric) / max(1.0, abs(aflat[i]), abs(numeric))
            worst = max(worst, err)
    return worst
