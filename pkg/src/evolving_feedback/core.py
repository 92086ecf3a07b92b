"""Domain types shared by every module.

Rounds are 1-based in every public signature (``t``, ``tau``); arrays are
indexed from 0, so round ``t`` lives in row ``t - 1``. Actions are 0-based
internally and 1-based in CSV/JSON output.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

UNBOUNDED = math.inf
PROB_SUM_TOL = 1e-9

# Philox stream ids; the 64-bit seed goes in the low half of the 128-bit key.
AGENT_STREAM = 0
BASE_LOSS_STREAM = 1
KIND_STREAM = 2


def make_rng(seed: int, stream: int = AGENT_STREAM) -> np.random.Generator:
    """Philox generator keyed by ``(seed, stream)``.

    Philox is counter based, so the stream layout is fixed by the key alone
    and does not depend on numpy's seeding heuristics.
    """
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.Philox(key=seed | (int(stream) << 64)))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def as_loss_vector(values, K: int | None = None) -> np.ndarray:
    """Validate one loss vector (true, feedback or hint) in ``[0, 1]^K``."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("loss vector must be one-dimensional")
    if K is not None and v.shape[0] != K:
        raise ValueError(f"loss vector has length {v.shape[0]}, expected {K}")
    if not np.all((v >= 0.0) & (v <= 1.0)):
        raise ValueError(f"loss entries must lie in [0, 1]: {v.tolist()}")
    return v


def is_distribution(p, tol: float = PROB_SUM_TOL) -> bool:
    p = np.asarray(p, dtype=np.float64)
    return bool(np.all(p > 0.0) and np.all(np.abs(p.sum(axis=-1) - 1.0) <= tol))


def check_distribution(p, tol: float = PROB_SUM_TOL) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if not is_distribution(p, tol):
        raise ValueError(f"not a strictly positive probability vector: {p}")
    return p


@dataclass(frozen=True)
class FeedbackUpdate:
    """Revision ``loss`` of the round-``origin_round`` loss, made at ``revision_round``."""

    origin_round: int
    revision_round: int
    loss: tuple

    def __post_init__(self):
        if self.origin_round < 1 or self.revision_round < self.origin_round:
            raise ValueError(
                f"need 1 <= tau <= t, got tau={self.origin_round}, t={self.revision_round}"
            )
        object.__setattr__(self, "loss", tuple(float(x) for x in as_loss_vector(self.loss)))


@dataclass(frozen=True, eq=False)
class Commitment:
    """Everything an oblivious adversary fixes before play.

    ``revisions[tau - 1, g]`` is the feedback about round ``tau`` observed at
    revision round ``tau + g`` for ``0 <= g <= window``; every later revision
    equals ``revisions[tau - 1, window]``. Storage is ``O(T * window * K)``.

    ``d_max`` is the declared evolution horizon, ``UNBOUNDED`` when the
    feedback never settles on the true loss.
    """

    true: np.ndarray
    revisions: np.ndarray
    d_max: float = UNBOUNDED

    def __post_init__(self):
        true = _frozen(self.true)
        rev = _frozen(self.revisions)
        if true.ndim != 2 or rev.ndim != 3:
            raise ValueError("true must be (T, K) and revisions (T, window + 1, K)")
        if rev.shape[0] != true.shape[0] or rev.shape[2] != true.shape[1]:
            raise ValueError(f"shape mismatch: true {true.shape}, revisions {rev.shape}")
        object.__setattr__(self, "true", true)
        object.__setattr__(self, "revisions", rev)

    @property
    def T(self) -> int:
        return self.true.shape[0]

    @property
    def K(self) -> int:
        return self.true.shape[1]

    @property
    def window(self) -> int:
        return self.revisions.shape[1] - 1

    @property
    def final(self) -> np.ndarray:
        """Feedback each round settles on, ``(T, K)``."""
        return self.revisions[:, -1, :]

    def feedback(self, t: int, tau: int) -> np.ndarray:
        if not 1 <= tau <= t <= self.T:
            raise IndexError(f"need 1 <= tau <= t <= T={self.T}, got tau={tau}, t={t}")
        return self.revisions[tau - 1, min(t - tau, self.window)]

    def active_block(self, t: int, window: int | None = None) -> np.ndarray:
        """Round-``t`` revisions for origins ``max(1, t - window) .. t``, oldest first."""
        w = self.window if window is None else window
        first = max(1, t - w)
        taus = np.arange(first, t + 1)
        ages = np.minimum(t - taus, self.window)
        return self.revisions[taus - 1, ages]


@dataclass(frozen=True, eq=False)
class RunTrace:
    """Record of one episode. ``actions`` are 0-based; ``sampling_probs`` is ``(T, K)``.

    A truncated trace (learner failure) keeps the rounds played so far and
    sets ``error``.
    """

    commitment: Commitment
    actions: np.ndarray
    sampling_probs: np.ndarray
    seed: int | None = None
    error: str | None = None
    meta: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.commitment.T

    @property
    def true_losses(self) -> np.ndarray:
        return self.commitment.true

    @property
    def truncated(self) -> bool:
        return self.error is not None

    def feedback(self, t: int, tau: int) -> np.ndarray:
        return self.commitment.feedback(t, tau)


class Violation(NamedTuple):
    t: int
    tau: int
    rule: str
    detail: str = ""


def validate_commitment(c: Commitment, d_max: float) -> list[Violation]:
    """Range, completeness and freezing checks on an adversary commitment."""
    out: list[Violation] = []
    T, W = c.T, c.window

    for row in np.flatnonzero(~np.all(np.isfinite(c.true), axis=1)):
        out.append(Violation(row + 1, row + 1, "undefined", "true loss not finite"))
    bad = ~np.all((c.true >= 0.0) & (c.true <= 1.0), axis=1)
    for row in np.flatnonzero(bad & np.all(np.isfinite(c.true), axis=1)):
        out.append(Violation(row + 1, row + 1, "true_range", str(c.true[row].tolist())))

    taus = np.arange(1, T + 1)[:, None]
    ages = np.arange(W + 1)[None, :]
    # Only (tau, g) pairs with tau + g <= T are ever observed.
    in_horizon = taus + ages <= T
    finite = np.all(np.isfinite(c.revisions), axis=2)
    in_range = np.all((c.revisions >= 0.0) & (c.revisions <= 1.0), axis=2)
    for i, g in zip(*np.nonzero(in_horizon & ~finite)):
        out.append(Violation(int(i + 1 + g), int(i + 1), "undefined", "feedback not finite"))
    for i, g in zip(*np.nonzero(in_horizon & finite & ~in_range)):
        out.append(
            Violation(int(i + 1 + g), int(i + 1), "feedback_range", str(c.revisions[i, g].tolist()))
        )

    if d_max < W:
        d = int(d_max)
        settled = c.revisions[:, d : d + 1, :]
        changed = np.any(c.revisions[:, d + 1 :, :] != settled, axis=2)
        changed &= in_horizon[:, d + 1 :]
        for i, j in zip(*np.nonzero(changed)):
            g = d + 1 + j
            out.append(
                Violation(
                    int(i + 1 + g),
                    int(i + 1),
                    "frozen_after_d_max",
                    f"feedback({i + 1 + g},{i + 1}) != feedback({i + 1 + d},{i + 1})",
                )
            )
    out.sort(key=lambda v: (v.t, v.tau, v.rule))
    return out


def validate_play(actions: np.ndarray, probs: np.ndarray, K: int) -> list[Violation]:
    """Checks on one episode's actions and sampling distributions."""
    out: list[Violation] = []
    actions = np.asarray(actions)
    probs = np.asarray(probs, dtype=np.float64)
    for t in np.flatnonzero((actions < 0) | (actions >= K)):
        out.append(Violation(int(t + 1), int(t + 1), "action_range", str(int(actions[t]))))
    bad = ~(np.all(probs > 0.0, axis=-1) & (np.abs(probs.sum(axis=-1) - 1.0) <= PROB_SUM_TOL))
    for t in np.flatnonzero(bad):
        out.append(Violation(int(t + 1), int(t + 1), "distribution", str(probs[t].tolist())))
    return out


def validate_trace(trace: RunTrace, d_max: float) -> list[Violation]:
    """All violations of the trace invariants; empty when the trace is sound.

    Violations are returned as data, never raised.
    """
    n = len(trace.actions)
    out = validate_commitment(trace.commitment, d_max)
    out += validate_play(trace.actions, trace.sampling_probs[:n], trace.commitment.K)
    out.sort(key=lambda v: (v.t, v.tau, v.rule))
    return out
