"""Feedback-accuracy quantities computed from an adversary commitment alone."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .core import Commitment


def _by_revision_round(c: Commitment, entries: np.ndarray) -> np.ndarray:
    """``out[r - 1] = sum_{tau <= r} entries[tau - 1, min(r - tau, window)]`` for r = 1..T.

    ``entries`` is ``(T, window + 1, ...)``. Origins older than the window
    contribute their settled entry through a running prefix sum.
    """
    T, W = c.T, c.window
    out = np.zeros((T,) + entries.shape[2:])
    settled = np.cumsum(entries[:, W], axis=0)
    # Ages 0..W-1 come from the window, age >= W from the settled prefix.
    for g in range(W):
        out[g:] += entries[: T - g, g]
    out[W:] += settled[: T - W]
    return out


def estimated_cumulative(c: Commitment) -> np.ndarray:
    """``L^e_t = sum_{tau < t} feedback(t - 1, tau)`` for t = 1..T, shape ``(T, K)``."""
    s = _by_revision_round(c, c.revisions)
    return np.vstack([np.zeros((1, c.K)), s[:-1]])


def true_cumulative(true: np.ndarray) -> np.ndarray:
    """``L_t = sum_{tau < t} loss_tau`` for t = 1..T."""
    true = np.asarray(true, dtype=np.float64)
    return np.vstack([np.zeros((1, true.shape[1])), np.cumsum(true, axis=0)[:-1]])


def inaccuracy_terms(c: Commitment) -> np.ndarray:
    """Per-round ``||L^e_t - L_t||_inf``.

    The gap is summed from per-entry differences rather than as a difference
    of two cumulative sums, so exact feedback gives exactly zero.
    """
    gap = _by_revision_round(c, c.revisions - c.true[:, None, :])
    gap = np.vstack([np.zeros((1, c.K)), gap[:-1]])
    return np.max(np.abs(gap), axis=1)


def inaccuracy_D(c: Commitment) -> float:
    """Total feedback inaccuracy ``D``: the sup-norm gap between estimated and
    true cumulative loss, summed over rounds."""
    return float(np.sum(inaccuracy_terms(c)))


def lambda_coeff(true, observed) -> float:
    """``x / (1 + x)`` with ``x`` the Euclidean distance of the two vectors."""
    true = np.asarray(true, dtype=np.float64)
    observed = np.asarray(observed, dtype=np.float64)
    if true.shape != observed.shape:
        raise ValueError(f"length mismatch: {true.shape} vs {observed.shape}")
    x = float(np.linalg.norm(observed - true))
    return x / (1.0 + x)


def _distances(c: Commitment) -> np.ndarray:
    return np.linalg.norm(c.revisions - c.true[:, None, :], axis=2)


def lambda_coeffs(c: Commitment) -> np.ndarray:
    """Coefficient table ``(T, window + 1)``; entry ``[tau - 1, g]`` is the coefficient at revision ``tau + g``."""
    x = _distances(c)
    return x / (1.0 + x)


def lambda_schedule(c: Commitment) -> np.ndarray:
    """``lambda_t = sum_{tau <= t - 1} coeff(t - 1, tau)`` for t = 1..T (``lambda_1 = 0``)."""
    per_round = _by_revision_round(c, lambda_coeffs(c))
    return np.concatenate([[0.0], per_round[:-1]])


def lambda_total(c: Commitment) -> float:
    """``Lambda = sum_t sum_{tau <= t} min(1, ||loss_tau - feedback(t, tau)||_2)``."""
    clipped = np.minimum(1.0, _distances(c))
    return float(np.sum(_by_revision_round(c, clipped)))


def lambda_total_shifted(c: Commitment) -> float:
    """``Lambda`` re-indexed to revision round ``t - 1``; always >= ``sum(lambda_schedule)``."""
    clipped = np.minimum(1.0, _distances(c))
    return float(np.sum(_by_revision_round(c, clipped)[:-1]))


def corruption_budget(true, corrupted) -> float:
    """``sum_t ||loss_t - corrupted_t||_inf``."""
    true = np.asarray(true, dtype=np.float64)
    corrupted = np.asarray(corrupted, dtype=np.float64)
    if true.shape != corrupted.shape:
        raise ValueError(f"horizon mismatch: {true.shape} vs {corrupted.shape}")
    if true.size == 0:
        return 0.0
    return float(np.sum(np.max(np.abs(true - corrupted), axis=-1)))


def d_max_observed(c: Commitment) -> int:
    """Largest ``d`` such that ``feedback(t, t - d)`` differs from the truth for some ``t <= T``."""
    T, W = c.T, c.window
    wrong = np.any(c.revisions != c.true[:, None, :], axis=2)
    best = 0
    taus = np.arange(1, T + 1)
    # Settled entries stay wrong for every later revision up to T.
    settled_wrong = wrong[:, W] & (taus + W <= T)
    if np.any(settled_wrong):
        best = int(np.max(T - taus[settled_wrong]))
    ages = np.arange(W + 1)[None, :]
    visible = wrong & (taus[:, None] + ages <= T)
    if np.any(visible):
        best = max(best, int(np.max(np.nonzero(visible)[1])))
    return best


@dataclass(frozen=True)
class AccuracyReport:
    D: float
    Lambda: float
    lambda_t: np.ndarray
    lambda_coeffs: np.ndarray
    d_max_observed: int
    corruption_budget: float
    D_partial: np.ndarray

    @property
    def lambda_sum(self) -> float:
        return float(np.sum(self.lambda_t))

    def to_dict(self) -> dict:
        return {
            "D": self.D,
            "Lambda": self.Lambda,
            "lambda_sum": self.lambda_sum,
            "d_max": self.d_max_observed,
            "corruption_budget": self.corruption_budget,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def accuracy_report(c: Commitment) -> AccuracyReport:
    """All accuracy aggregates of a commitment.

    ``corruption_budget`` compares the true losses with the feedback each
    round eventually settles on.
    """
    terms = inaccuracy_terms(c)
    return AccuracyReport(
        D=float(np.sum(terms)),
        Lambda=lambda_total(c),
        lambda_t=lambda_schedule(c),
        lambda_coeffs=lambda_coeffs(c),
        d_max_observed=d_max_observed(c),
        corruption_budget=corruption_budget(c.true, c.final),
        D_partial=np.cumsum(terms),
    )


def delay_bound(delays, T: int) -> float:
    """``sum_t min(d_t, t - 1)``, the exact ``D`` bound for delayed feedback with all-ones losses."""
    d = np.broadcast_to(np.asarray(delays, dtype=np.float64), (T,))
    return float(np.sum(np.minimum(d, np.arange(T))))


def is_finite_horizon(d_max) -> bool:
    return not math.isinf(d_max)
