"""Simplex argmin under the negative-entropy plus log-barrier regularizer.

The objective is ``p . L + sum_i (p_i / eta - barrier) * ln p_i`` over the
probability simplex (``barrier = 1 / gamma``). Its stationarity condition,
with multiplier ``mu`` for the simplex constraint, is

    L_i + (ln p_i + 1) / eta - barrier / p_i + mu = 0.

For fixed ``mu`` each coordinate has the closed-form root
``p_i = eta*barrier / omega(z_i)`` with ``z_i = ln(eta*barrier) + eta*c_i``,
``c_i = L_i + mu + 1/eta`` and ``omega`` the Wright omega function. The
remaining scalar equation ``sum_i p_i(mu) = 1`` is decreasing and convex in
``mu``, so Newton started left of the root climbs monotonically onto it; a
bisection bracket guards every step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, wrightomega, xlogy

SUM_TOL = 1e-13
MAX_OUTER = 200


@dataclass(frozen=True)
class RegularizerParams:
    eta: float
    barrier: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.eta) and self.eta > 0):
            raise ValueError(f"eta must be finite and > 0, got {self.eta}")
        if not (math.isfinite(self.barrier) and self.barrier >= 0):
            raise ValueError(f"barrier must be finite and >= 0, got {self.barrier}")

    @classmethod
    def from_gamma(cls, eta: float, gamma: float | None) -> "RegularizerParams":
        """``gamma=None`` drops the log barrier."""
        return cls(float(eta), 0.0 if gamma is None else 1.0 / float(gamma))

    @property
    def gamma(self) -> float:
        return math.inf if self.barrier == 0 else 1.0 / self.barrier


@dataclass
class SolveResult:
    p: np.ndarray
    mu: np.ndarray
    iterations: int
    converged: np.ndarray
    residual: np.ndarray


class ConvergenceError(ArithmeticError):
    def __init__(self, result: SolveResult):
        self.result = result
        bad = int(np.sum(~result.converged))
        super().__init__(
            f"simplex solver did not converge for {bad} row(s) after {result.iterations} "
            f"iterations; worst |sum p - 1| = {float(np.max(result.residual)):.3e}"
        )


def softmax(L, eta: float) -> np.ndarray:
    """``p_i ∝ exp(-eta * L_i)`` along the last axis, shifted by the row minimum."""
    L = np.asarray(L, dtype=np.float64)
    w = np.exp(-eta * (L - L.min(axis=-1, keepdims=True)))
    return w / w.sum(axis=-1, keepdims=True)


def objective(p, L, params: RegularizerParams) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    L = np.asarray(L, dtype=np.float64)
    with np.errstate(divide="ignore"):
        reg = np.sum(xlogy(p, p) / params.eta - params.barrier * np.log(p), axis=-1)
    return np.sum(p * L, axis=-1) + reg


def _log_p(Ls, mu, eta, log_eb):
    """``ln p_i(mu)`` for the barrier case; ``Ls`` is ``(n, K)``, ``mu`` is ``(n,)``."""
    etac = eta * (Ls + mu[:, None]) + 1.0
    z = log_eb + etac
    w = wrightomega(z)
    # ln p = ln(eta b) - ln w; for z <= 1 use ln w = z - w to avoid ln of tiny w.
    with np.errstate(divide="ignore"):
        big = log_eb - np.log(w)
    return np.where(z > 1.0, big, w - etac), w


def solve_argmin(L, params: RegularizerParams, *, mu0=None, full_output: bool = False):
    """Minimize ``p . L + Phi(p)`` over the simplex.

    Parameters
    ----------
    L : array_like, shape (K,) or (n, K)
        Cumulative loss estimates; rows are solved independently.
    params : RegularizerParams
    mu0 : array_like, optional
        Warm-start multiplier per row. Used only when it lies inside the
        row's bracket; the result does not depend on it beyond rounding.
    full_output : bool
        Return a :class:`SolveResult` instead of raising on non-convergence.

    Returns
    -------
    ndarray or SolveResult
        Strictly positive distribution(s) of the same shape as ``L``.
    """
    L = np.asarray(L, dtype=np.float64)
    single = L.ndim == 1
    L2 = np.atleast_2d(L)
    if L2.ndim != 2 or L2.shape[1] < 1:
        raise ValueError(f"L must be (K,) or (n, K), got shape {L.shape}")
    if not np.all(np.isfinite(L2)):
        raise ValueError("L must be finite")
    n, K = L2.shape
    eta, b = params.eta, params.barrier
    # The objective shifts by a constant under L -> L + c, so solve at min(L) = 0.
    Ls = L2 - L2.min(axis=1, keepdims=True)

    if b == 0.0 or K == 1:
        p = softmax(Ls, eta)
        mu = (logsumexp(-eta * Ls, axis=1) - 1.0) / eta
        res = SolveResult(p, mu, 0, np.ones(n, bool), np.abs(p.sum(axis=1) - 1.0))
        return res if full_output else (p[0] if single else p)

    log_eb = math.log(eta * b)
    # mu where p_i = 1/K: at the smallest one all p_j >= 1/K, at the largest all <= 1/K.
    mu_i = -Ls + (math.log(K) - 1.0) / eta + b * K
    hi = mu_i.max(axis=1)
    # The entropy-only multiplier leaves sum p >= 1, so it is also left of the root.
    lo = np.maximum(mu_i.min(axis=1), (logsumexp(-eta * Ls, axis=1) - 1.0) / eta)
    mu = lo.copy()
    if mu0 is not None:
        m0 = np.broadcast_to(np.asarray(mu0, dtype=np.float64), (n,))
        inside = (m0 > lo) & (m0 < hi)
        mu = np.where(inside, m0, mu)

    active = np.ones(n, bool)
    logp, w = _log_p(Ls, mu, eta, log_eb)
    p = np.exp(logp)
    g = p.sum(axis=1) - 1.0
    it = 0
    for it in range(1, MAX_OUTER + 1):
        done = np.abs(g) <= SUM_TOL
        active &= ~done
        if not active.any():
            break
        lo = np.where(active & (g > 0), np.maximum(lo, mu), lo)
        hi = np.where(active & (g < 0), np.minimum(hi, mu), hi)
        slope = -eta * np.sum(p / (1.0 + w), axis=1)
        step = mu - g / slope
        outside = ~((step > lo) & (step < hi))
        step = np.where(outside, 0.5 * (lo + hi), step)
        stalled = active & (step == mu)
        active &= ~stalled
        mu = np.where(active, step, mu)
        logp_new, w_new = _log_p(Ls, mu, eta, log_eb)
        p = np.where(active[:, None], np.exp(logp_new), p)
        w = np.where(active[:, None], w_new, w)
        g = np.where(active, p.sum(axis=1) - 1.0, g)

    residual = np.abs(g)
    converged = residual <= 1e-10
    p = p / p.sum(axis=1, keepdims=True)
    res = SolveResult(p[0] if single else p, mu, it, converged, residual)
    if full_output:
        return res
    if not converged.all():
        raise ConvergenceError(res)
    return res.p


def kkt_residual(p, L, params: RegularizerParams) -> float:
    """Normalized spread of the stationarity gradient across coordinates.

    ``g_i = L_i + (ln p_i + 1)/eta - barrier/p_i``; returns
    ``max_i |g_i - mean(g)| / (1 + |mean(g)|)``, which is 0 at the optimum.
    """
    p = np.asarray(p, dtype=np.float64)
    L = np.asarray(L, dtype=np.float64)
    if np.any(p <= 0):
        raise ValueError("kkt_residual needs a strictly positive p")
    g = L + (np.log(p) + 1.0) / params.eta - params.barrier / p
    gbar = g.mean(axis=-1, keepdims=True)
    r = np.max(np.abs(g - gbar), axis=-1) / (1.0 + np.abs(gbar[..., 0]))
    return float(np.max(r))


def barrier_floor(L, params: RegularizerParams) -> float:
    """Crude positive lower bound on every coordinate of the optimum."""
    L = np.asarray(L, dtype=np.float64)
    K = L.shape[-1]
    spread = float(np.max(L) - np.min(L))
    return params.barrier / (params.barrier * K + spread + 2.0 / params.eta + 1.0)
