"""Brute-force references that share no code path with the fast implementations."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .core import Commitment, make_rng
from .learners import importance_estimate
from .solver import RegularizerParams, objective


@dataclass(frozen=True)
class OracleResult:
    value: object
    method: str
    resolution: int

    def to_dict(self) -> dict:
        v = self.value
        if isinstance(v, np.ndarray):
            v = v.tolist()
        return {"value": v, "method": self.method, "resolution": self.resolution}


@lru_cache(maxsize=8)
def simplex_grid(K: int, resolution: int) -> np.ndarray:
    """Interior barycentric grid ``(n_i + 1/2) / (resolution + K/2)`` with ``sum n_i = resolution``."""
    pts = [
        c + (resolution - sum(c),)
        for c in itertools.product(range(resolution + 1), repeat=K - 1)
        if sum(c) <= resolution
    ]
    n = np.asarray(pts, dtype=np.float64).reshape(-1, K)
    grid = (n + 0.5) / (resolution + 0.5 * K)
    grid.setflags(write=False)
    return grid


def _inv(barrier, log_p):
    # barrier / p, saturating instead of overflowing far out in the bracket.
    return barrier * math.exp(min(-log_p, 700.0)) if barrier else 0.0


def _pair_gradient_gap(y, i, j, s, p, L, eta, barrier):
    # p_i = s * sigmoid(y), p_j = s * sigmoid(-y), both kept in log form.
    log_pi = math.log(s) - np.logaddexp(0.0, -y)
    log_pj = math.log(s) - np.logaddexp(0.0, y)
    gi = L[i] + (log_pi + 1.0) / eta - _inv(barrier, log_pi)
    gj = L[j] + (log_pj + 1.0) / eta - _inv(barrier, log_pj)
    return gi - gj


def _refine_pairwise(p, L, params: RegularizerParams, sweeps: int) -> np.ndarray:
    """Exact two-coordinate minimization over all pairs, ``sweeps`` passes."""
    p = p.copy()
    K = len(p)
    eta, barrier = params.eta, params.barrier
    for _ in range(sweeps):
        moved = 0.0
        for i in range(K):
            for j in range(i + 1, K):
                s = p[i] + p[j]
                args = (i, j, s, p, L, eta, barrier)
                lo, hi = -700.0, 700.0
                while _pair_gradient_gap(lo, *args) > 0:
                    lo *= 2
                while _pair_gradient_gap(hi, *args) < 0:
                    hi *= 2
                y = brentq(_pair_gradient_gap, lo, hi, args=args, xtol=1e-15, rtol=1e-15, maxiter=500)
                pi, pj = s * expit(y), s * expit(-y)
                moved = max(moved, abs(pi - p[i]))
                p[i], p[j] = pi, pj
        if moved < 1e-16:
            break
    return p


def grid_argmin_simplex(L, params: RegularizerParams, resolution: int = 100, sweeps: int = 200) -> np.ndarray:
    """Grid search on the simplex interior followed by pairwise coordinate descent.

    Every grid point has all coordinates at least ``1 / (2 resolution + K)``;
    the best grid point is refined by up to ``sweeps`` passes of exact
    two-coordinate minimization.
    """
    L = np.asarray(L, dtype=np.float64)
    K = L.shape[0]
    if K > 4:
        raise ValueError("grid oracle supports K <= 4")
    if resolution < 100:
        raise ValueError("resolution must be >= 100")
    if K == 1:
        return np.ones(1)
    grid = simplex_grid(K, resolution)
    f = objective(grid, L, params)
    p0 = grid[int(np.argmin(f))]
    return _refine_pairwise(p0, L, params, sweeps)


def best_action_hindsight(true_losses) -> tuple[int, float]:
    """Action with the smallest total loss (0-based; ties go to the lowest index)."""
    true_losses = np.asarray(true_losses, dtype=np.float64)
    if true_losses.ndim != 2 or true_losses.shape[0] == 0:
        raise ValueError("need a nonempty (T, K) loss table")
    totals = true_losses.sum(axis=0)
    a = int(np.argmin(totals))
    return a, float(totals[a])


def mc_unbiasedness(feedback, p, n_samples: int = 100_000, seed: int = 0):
    """Monte Carlo mean of the importance-weighted estimate over ``a ~ p``.

    Returns
    -------
    mean, stderr, z : ndarray
        Per-coordinate sample mean, its standard error and the deviation
        from ``feedback`` in standard errors (0 where both are 0).
    """
    feedback = np.asarray(feedback, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if n_samples < 10_000:
        raise ValueError("n_samples must be >= 1e4")
    K = len(p)
    rng = make_rng(seed)
    actions = rng.choice(K, size=n_samples, p=p / p.sum())
    total = np.zeros(K)
    total_sq = np.zeros(K)
    for a in range(K):
        est = importance_estimate(feedback[a], a, p)
        count = int(np.sum(actions == a))
        total += count * est
        total_sq += count * est**2
    mean = total / n_samples
    var = np.maximum(total_sq / n_samples - mean**2, 0.0) * n_samples / (n_samples - 1)
    stderr = np.sqrt(var / n_samples)
    gap = np.abs(mean - feedback)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(stderr > 0, gap / stderr, np.where(gap > 0, np.inf, 0.0))
    return mean, stderr, z


def exhaustive_regret_small(commitment: Commitment, learner_factory, max_paths: int = 4096) -> float:
    """Exact expected regret by enumerating every action path.

    ``learner_factory()`` returns a fresh learner. All ``K**T`` paths run as
    one batch with forced actions; each path's probability is the product of
    the distributions it followed.
    """
    T, K = commitment.T, commitment.K
    n = K**T
    if n > max_paths:
        raise ValueError(f"{K}^{T} = {n} paths exceeds max_paths={max_paths}")
    paths = np.array(list(itertools.product(range(K), repeat=T)), dtype=np.int64).reshape(n, T)
    learner = learner_factory()
    learner.reset(K, n, commitment.window)
    rows = np.arange(n)
    weight = np.ones(n)
    # Paths through a zero-probability action have weight 0; the learner is
    # shown its most likely action there instead so its state stays valid.
    played = paths.copy()
    for t in range(1, T + 1):
        p = np.broadcast_to(learner.act(t), (n, K))
        a = paths[:, t - 1]
        weight = weight * p[rows, a]
        a = np.where(p[rows, a] > 0, a, np.argmax(p, axis=1))
        played[:, t - 1] = a
        block = commitment.active_block(t)
        if learner.full_information:
            payload = block
        else:
            taus = np.arange(t - len(block) + 1, t + 1)
            payload = block[np.arange(len(block))[None, :], played[:, taus - 1]]
        learner.observe(t, a, payload)
    _, best = best_action_hindsight(commitment.true)
    incurred = commitment.true[np.arange(T)[None, :], paths].sum(axis=1)
    return float(np.sum(weight * incurred) - best)
