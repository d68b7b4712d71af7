"""Exact O(n^2) t-SNE with per-point bandwidth search.

Gaussian input affinities are symmetrized to a joint distribution; the
low-dimensional kernel is Student-t with one degree of freedom. The KL
objective and its analytic gradient are exposed separately so they can be
verified against finite differences.
"""

from __future__ import annotations

import numpy as np

from .util import PipelineError, keyed_rng

_P_FLOOR = 1e-12


def pairwise_sq_dists(x: np.ndarray) -> np.ndarray:
    s = np.sum(x * x, axis=1)
    d = s[:, None] + s[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def _row_affinity(dists: np.ndarray, beta: float) -> tuple[np.ndarray, float]:
    """Conditional probabilities and Shannon entropy (nats) for one point."""
    p = np.exp(-dists * beta)
    total = p.sum()
    if total <= 0.0:
        return np.zeros_like(p), 0.0
    p = p / total
    nz = p > 0
    h = -np.sum(p[nz] * np.log(p[nz]))
    return p, h


def perplexity_affinities(x: np.ndarray, perplexity: float,
                          tol: float = 1e-5, max_iter: int = 64) -> np.ndarray:
    """Symmetrized joint affinities P with per-point entropy log(perplexity).

    The precision of each point's Gaussian is found by bisection on the
    entropy, to ``tol`` nats.
    """
    n = x.shape[0]
    if n < 5:
        raise PipelineError("t-SNE needs at least 5 points")
    if not (1.0 <= perplexity < n):
        raise PipelineError(f"perplexity must be in [1, n), got {perplexity} for n={n}")
    sq = pairwise_sq_dists(x)
    target = np.log(perplexity)
    cond = np.zeros((n, n))
    for i in range(n):
        dists = np.delete(sq[i], i)
        beta, lo, hi = 1.0, 0.0, np.inf
        p = np.zeros_like(dists)
        for _ in range(max_iter):
            p, h = _row_affinity(dists, beta)
            if abs(h - target) < tol:
                break
            if h > target:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (lo + beta) / 2.0
        cond[i, np.arange(n) != i] = p
    joint = (cond + cond.T) / (2.0 * n)
    return np.maximum(joint, _P_FLOOR)


def joint_q(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Student-t joint distribution Q and the unnormalized kernel."""
    num = 1.0 / (1.0 + pairwise_sq_dists(y))
    np.fill_diagonal(num, 0.0)
    q = num / num.sum()
    return np.maximum(q, _P_FLOOR), num


def kl_divergence(p: np.ndarray, y: np.ndarray) -> float:
    q, _ = joint_q(y)
    mask = ~np.eye(p.shape[0], dtype=bool)
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def kl_grad(p: np.ndarray, y: np.ndarray) -> np.ndarray:
    q, num = joint_q(y)
    pq = (p - q) * num
    return 4.0 * ((np.diag(pq.sum(axis=1)) - pq) @ y)


def tsne(x: np.ndarray, perplexity: float = 10.0, lr: float = 100.0,
         iters: int = 500, seed: int = 0, init: np.ndarray | None = None,
         momentum_early: float = 0.5, momentum_late: float = 0.8,
         momentum_switch: int = 250) -> tuple[np.ndarray, list[float]]:
    """Gradient descent on the KL objective; returns (Y, KL history).

    The history holds the cost at every iteration including the initial
    configuration.
    """
    x = np.asarray(x, dtype=np.float64)
    p = perplexity_affinities(x, perplexity)
    n = x.shape[0]
    if init is not None:
        y = np.array(init, dtype=np.float64, copy=True)
        if y.shape != (n, 2):
            raise PipelineError(f"init must be (n, 2), got {y.shape}")
    else:
        y = keyed_rng("tsne", seed).normal(0.0, 1e-4, (n, 2))
    vel = np.zeros_like(y)
    history = [kl_divergence(p, y)]
    for it in range(iters):
        g = kl_grad(p, y)
        mom = momentum_early if it < momentum_switch else momentum_late
        vel = mom * vel - lr * g
        y = y + vel
        y = y - y.mean(axis=0)
        cost = kl_divergence(p, y)
        if not np.isfinite(cost):
            raise PipelineError(f"t-SNE diverged at iteration {it}; lower the learning rate")
        history.append(cost)
    return y, history
