"""Oblivious adversaries with evolving feedback.

Every environment fixes the true losses and the whole feedback table up
front from its own seed; nothing here takes an agent action as input.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .core import (
    BASE_LOSS_STREAM,
    KIND_STREAM,
    UNBOUNDED,
    Commitment,
    FeedbackUpdate,
    as_loss_vector,
    make_rng,
)

KINDS = ("scripted", "delayed", "optimistic_delayed", "corrupted", "composite", "noisy_decay")
DEFAULT_MAX_BYTES = 1 << 30


class MemoryBudgetError(ValueError):
    pass


@dataclass(frozen=True)
class EnvironmentSpec:
    """Configuration of one adversary.

    ``base`` selects the true-loss generator, ``params`` holds the
    kind-specific settings (see the ``_build_*`` functions).
    """

    kind: str
    K: int
    T: int
    seed: int = 0
    base: dict = field(default_factory=lambda: {"type": "bernoulli"})
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown environment kind {self.kind!r}; expected one of {KINDS}")
        if int(self.K) < 1 or int(self.T) < 1:
            raise ValueError("K and T must be >= 1")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "K": int(self.K),
            "T": int(self.T),
            "seed": int(self.seed),
            "base": copy.deepcopy(self.base),
            "params": copy.deepcopy(self.params),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnvironmentSpec":
        d = dict(d)
        unknown = set(d) - {"kind", "K", "T", "seed", "base", "params"}
        if unknown:
            raise ValueError(f"unknown environment fields: {sorted(unknown)}")
        return cls(
            kind=d["kind"],
            K=int(d["K"]),
            T=int(d["T"]),
            seed=int(d.get("seed", 0)),
            base=dict(d.get("base") or {"type": "bernoulli"}),
            params=dict(d.get("params") or {}),
        )

    def key(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def replace(self, **changes) -> "EnvironmentSpec":
        d = self.to_dict()
        d.update(changes)
        return EnvironmentSpec.from_dict(d)


# -- true losses --------------------------------------------------------------


def base_losses(spec: EnvironmentSpec) -> np.ndarray:
    """True loss table ``(T, K)`` from ``spec.base``.

    Types: ``bernoulli`` (``means``, default drawn from U[0.2, 0.8]),
    ``uniform`` (``low``, ``high``), ``constant`` (``loss``),
    ``table`` (``losses``).
    """
    K, T = spec.K, spec.T
    base = spec.base or {"type": "bernoulli"}
    kind = base.get("type", "bernoulli")
    rng = make_rng(spec.seed, BASE_LOSS_STREAM)
    if kind == "bernoulli":
        means = base.get("means")
        means = rng.uniform(0.2, 0.8, size=K) if means is None else as_loss_vector(means, K)
        return (rng.random((T, K)) < means).astype(np.float64)
    if kind == "uniform":
        low, high = float(base.get("low", 0.0)), float(base.get("high", 1.0))
        if not 0.0 <= low <= high <= 1.0:
            raise ValueError("uniform base needs 0 <= low <= high <= 1")
        return low + (high - low) * rng.random((T, K))
    if kind == "constant":
        return np.tile(as_loss_vector(base["loss"], K), (T, 1))
    if kind == "table":
        table = np.asarray(base["losses"], dtype=np.float64)
        if table.shape != (T, K):
            raise ValueError(f"table base has shape {table.shape}, expected {(T, K)}")
        for row in table:
            as_loss_vector(row, K)
        return table
    raise ValueError(f"unknown base loss type {kind!r}")


# -- per-kind constructions ---------------------------------------------------


def _per_round(value, T: int, name: str) -> np.ndarray:
    arr = np.asarray(value)
    if arr.ndim == 0:
        arr = np.full(T, arr)
    if arr.shape != (T,):
        raise ValueError(f"{name} must be a scalar or a length-T list")
    if np.any(arr < 0) or np.any(arr != np.floor(arr)):
        raise ValueError(f"{name} must be nonnegative integers")
    return arr.astype(np.int64)


def _check_budget(T: int, window: int, K: int, max_bytes: int) -> None:
    need = T * (window + 1) * K * 8
    if need > max_bytes:
        raise MemoryBudgetError(
            f"feedback table needs {need} bytes (T={T}, window={window}, K={K}), "
            f"budget is {max_bytes}"
        )


def _build_delayed(spec, true, max_bytes):
    delays = _per_round(spec.params.get("delay", 0), spec.T, "delay")
    W = int(delays.max())
    _check_budget(spec.T, W, spec.K, max_bytes)
    ages = np.arange(W + 1)[None, :]
    revealed = ages >= delays[:, None]
    rev = np.where(revealed[:, :, None], true[:, None, :], 0.0)
    return rev, W


def _build_optimistic(spec, true, max_bytes):
    p = spec.params
    d = int(p.get("delay", 0))
    if d < 0:
        raise ValueError("delay must be >= 0")
    _check_budget(spec.T, d, spec.K, max_bytes)
    if p.get("hints") is not None:
        hints = np.asarray(p["hints"], dtype=np.float64)
        if hints.shape != true.shape:
            raise ValueError(f"hints have shape {hints.shape}, expected {true.shape}")
        for row in hints:
            as_loss_vector(row)
    else:
        noise = float(p.get("hint_noise", 0.1))
        rng = make_rng(spec.seed, KIND_STREAM)
        hints = np.clip(true + noise * rng.standard_normal(true.shape), 0.0, 1.0)
    ages = np.arange(d + 1)[None, :, None]
    rev = np.where(ages < d, hints[:, None, :], true[:, None, :])
    return rev, d


def corruption_schedule(true: np.ndarray, budget: float, placement: str, rng) -> np.ndarray:
    """Flip losses toward ``1 - loss`` round by round until ``budget`` is spent.

    Each corrupted round costs ``f * max_i |1 - 2 loss_i|`` in sup norm for a
    flip fraction ``f``; only the last corrupted round is partial.
    """
    T = true.shape[0]
    if placement == "first":
        order = np.arange(T)
    elif placement == "spread":
        n = max(1, min(T, int(np.ceil(budget))))
        order = np.concatenate([np.linspace(0, T - 1, n).round().astype(int), np.arange(T)])
        order = order[np.sort(np.unique(order, return_index=True)[1])]
    elif placement == "random":
        order = rng.permutation(T)
    else:
        raise ValueError(f"unknown corruption placement {placement!r}")
    corrupted = true.copy()
    left = float(budget)
    for r in order:
        if left <= 0:
            break
        span = float(np.max(np.abs(1.0 - 2.0 * true[r])))
        if span == 0.0:
            continue
        f = min(1.0, left / span)
        corrupted[r] = true[r] + f * (1.0 - 2.0 * true[r])
        left -= f * span
    if left > 1e-12:
        raise ValueError(f"corruption budget {budget} exceeds what the loss table allows")
    return corrupted


def _build_corrupted(spec, true, max_bytes):
    p = spec.params
    if p.get("corrupted") is not None:
        corrupted = np.asarray(p["corrupted"], dtype=np.float64)
        if corrupted.shape != true.shape:
            raise ValueError(f"corrupted table has shape {corrupted.shape}, expected {true.shape}")
        for row in corrupted:
            as_loss_vector(row)
    else:
        rng = make_rng(spec.seed, KIND_STREAM)
        corrupted = corruption_schedule(
            true, float(p.get("budget", 0.0)), p.get("placement", "first"), rng
        )
    return corrupted[:, None, :], 0


def composite_prefixes(true: np.ndarray, d: int, pattern: str, amplitude: float, rng) -> np.ndarray:
    """Prefix sums ``(T, d, K)`` of generated partial losses; the last prefix is the true loss."""
    T, K = true.shape
    if pattern == "positive":
        w = rng.random((T, d, K)) + 1e-12
        w /= w.sum(axis=1, keepdims=True)
        prefixes = np.cumsum(true[:, None, :] * w, axis=1)
    elif pattern == "negative":
        # Alternate over- and under-shooting the true loss, then settle on it.
        sign = np.where(np.arange(d) % 2 == 0, 1.0, -1.0)[None, :, None]
        jitter = rng.random((T, d, K))
        prefixes = np.clip(true[:, None, :] + amplitude * sign * jitter, 0.0, 1.0)
    else:
        raise ValueError(f"unknown composite pattern {pattern!r}")
    prefixes[:, -1, :] = true
    return np.clip(prefixes, 0.0, 1.0)


def check_prefix_constraint(prefixes: np.ndarray) -> None:
    """Every prefix sum of partial losses must stay inside ``[0, 1]^K``."""
    bad = ~np.all((prefixes >= 0.0) & (prefixes <= 1.0), axis=2)
    if np.any(bad):
        t, s = np.argwhere(bad)[0]
        raise ValueError(
            f"composite prefix sum for round {t + 1}, s={s + 1} leaves [0,1]^K: "
            f"{prefixes[t, s].tolist()}"
        )


def _build_composite(spec, true, max_bytes):
    p = spec.params
    d = int(p.get("d", 1))
    if d < 1:
        raise ValueError("composite d must be >= 1")
    _check_budget(spec.T, d - 1, spec.K, max_bytes)
    if p.get("partials") is not None:
        partials = np.asarray(p["partials"], dtype=np.float64)
        if partials.shape != (spec.T, d, spec.K):
            raise ValueError(f"partials have shape {partials.shape}, expected {(spec.T, d, spec.K)}")
        prefixes = np.cumsum(partials, axis=1)
    else:
        rng = make_rng(spec.seed, KIND_STREAM)
        prefixes = composite_prefixes(
            true, d, p.get("pattern", "positive"), float(p.get("amplitude", 0.5)), rng
        )
    check_prefix_constraint(prefixes)
    # Revision at age g holds the first g + 1 partials.
    return prefixes, d - 1, prefixes[:, -1, :].copy()


def _build_noisy_decay(spec, true, max_bytes):
    p = spec.params
    eps0 = float(p.get("eps0", 0.5))
    rho = float(p.get("rho", 0.5))
    cutoff = int(p.get("cutoff", 32))
    if eps0 < 0 or not 0 <= rho <= 1 or cutoff < 0:
        raise ValueError("noisy_decay needs eps0 >= 0, 0 <= rho <= 1, cutoff >= 0")
    _check_budget(spec.T, cutoff, spec.K, max_bytes)
    rng = make_rng(spec.seed, KIND_STREAM)
    u = rng.choice([-1.0, 1.0], size=true.shape)
    g = np.arange(cutoff + 1)
    eps = np.where(g < cutoff, eps0 * rho**g, 0.0)
    rev = np.clip(true[:, None, :] + eps[None, :, None] * u[:, None, :], 0.0, 1.0)
    return rev, cutoff


def load_scripted(path) -> EnvironmentSpec:
    """Read a scripted environment from JSON (``K``, ``T``, ``true``, ``feedback``)."""
    with open(Path(path)) as fh:
        doc = json.load(fh)
    return scripted_spec(doc)


def scripted_spec(doc: dict) -> EnvironmentSpec:
    return EnvironmentSpec(
        kind="scripted",
        K=int(doc["K"]),
        T=int(doc["T"]),
        base={"type": "table", "losses": doc["true"]},
        params={"feedback": list(doc.get("feedback", []))},
    )


def scripted_revisions(T: int, K: int, entries, strict: bool = True) -> tuple[np.ndarray, int]:
    """Feedback table from sparse ``{t, tau, loss}`` entries.

    ``(tau, tau)`` defaults to zeros; any other missing ``(t, tau)`` repeats
    the latest earlier revision for ``tau``. With ``strict=False`` losses
    outside ``[0, 1]`` are kept so that trace validation can report them.
    """
    updates = []
    for e in entries:
        if isinstance(e, FeedbackUpdate):
            u = (e.origin_round, e.revision_round, e.loss)
        elif strict:
            f = FeedbackUpdate(int(e["tau"]), int(e["t"]), e["loss"])
            u = (f.origin_round, f.revision_round, f.loss)
        else:
            u = (int(e["tau"]), int(e["t"]), tuple(float(x) for x in e["loss"]))
        if not 1 <= u[0] <= u[1] <= T or len(u[2]) != K:
            raise ValueError(f"feedback entry out of range: t={u[1]}, tau={u[0]}, loss={u[2]}")
        updates.append(u)
    W = max((t - tau for tau, t, _ in updates), default=0)
    dense = np.full((T, W + 1, K), np.nan)
    for tau, t, loss in updates:
        dense[tau - 1, t - tau] = loss
    first = dense[:, 0, :]
    first[np.isnan(first)] = 0.0
    for g in range(1, W + 1):
        missing = np.isnan(dense[:, g, :])
        dense[:, g, :][missing] = dense[:, g - 1, :][missing]
    return dense, W


def _settled_window(rev: np.ndarray) -> int:
    """Smallest age from which every origin's feedback stays constant."""
    W = rev.shape[1] - 1
    if W == 0:
        return 0
    changes = np.any(rev[:, 1:, :] != rev[:, :-1, :], axis=2)
    if not np.any(changes):
        return 0
    return int(np.max(np.nonzero(changes)[1])) + 1


def _build(spec: EnvironmentSpec, max_bytes: int) -> Commitment:
    true = base_losses(spec)
    if spec.kind == "delayed":
        rev, W = _build_delayed(spec, true, max_bytes)
    elif spec.kind == "optimistic_delayed":
        rev, W = _build_optimistic(spec, true, max_bytes)
    elif spec.kind == "corrupted":
        rev, W = _build_corrupted(spec, true, max_bytes)
    elif spec.kind == "composite":
        rev, W, true = _build_composite(spec, true, max_bytes)
    elif spec.kind == "noisy_decay":
        rev, W = _build_noisy_decay(spec, true, max_bytes)
    else:
        _check_budget(spec.T, 0, spec.K, max_bytes)
        rev, W = scripted_revisions(spec.T, spec.K, spec.params.get("feedback", []))
        _check_budget(spec.T, W, spec.K, max_bytes)
    settled = _settled_window(rev)
    accurate_eventually = np.array_equal(rev[:, -1, :], true)
    horizon = settled if accurate_eventually else UNBOUNDED
    if spec.kind in ("delayed", "optimistic_delayed", "noisy_decay") and accurate_eventually:
        # Declared horizon follows the construction even when some revisions coincide.
        horizon = W
    return Commitment(true=true, revisions=rev, d_max=horizon)


@lru_cache(maxsize=16)
def _cached(key: str, max_bytes: int) -> Commitment:
    return _build(EnvironmentSpec.from_dict(json.loads(key)), max_bytes)


def materialize_trace_skeleton(spec: EnvironmentSpec, max_bytes: int = DEFAULT_MAX_BYTES) -> Commitment:
    """The complete adversary commitment for ``spec``.

    Raises
    ------
    MemoryBudgetError
        If ``T * (window + 1) * K`` doubles exceed ``max_bytes``.
    """
    return _cached(spec.key(), int(max_bytes))


def true_loss(spec: EnvironmentSpec, t: int) -> np.ndarray:
    if not 1 <= t <= spec.T:
        raise IndexError(f"round {t} outside 1..{spec.T}")
    return materialize_trace_skeleton(spec).true[t - 1]


def feedback_loss(spec: EnvironmentSpec, t: int, tau: int) -> np.ndarray:
    return materialize_trace_skeleton(spec).feedback(t, tau)


def evolution_horizon(spec: EnvironmentSpec) -> float:
    """Rounds after which feedback stops changing, or ``UNBOUNDED``.

    Feedback that settles on something other than the true loss (corruption)
    never becomes accurate, so its horizon is ``UNBOUNDED``.
    """
    return materialize_trace_skeleton(spec).d_max


def composite_partials(spec: EnvironmentSpec) -> np.ndarray:
    """Partial losses ``(T, d, K)`` of a composite environment (differences of prefixes)."""
    if spec.kind != "composite":
        raise ValueError("not a composite environment")
    c = materialize_trace_skeleton(spec)
    return np.diff(c.revisions, axis=1, prepend=0.0)


def hints(spec: EnvironmentSpec) -> np.ndarray:
    """Hint vectors of an optimistic_delayed environment (its age-0 feedback)."""
    if spec.kind != "optimistic_delayed":
        raise ValueError("not an optimistic_delayed environment")
    return materialize_trace_skeleton(spec).revisions[:, 0, :]
