"""JSON form of a single episode trace.

Schema (actions 1-based)::

    {"K": int, "T": int, "d_max": int | null, "seed": int | null,
     "true": [[K floats] x T],
     "feedback": [{"t": int, "tau": int, "loss": [K floats]}, ...],
     "actions": [int x T], "sampling_probs": [[K floats] x T]}

``feedback`` uses the scripted-environment rules: a missing ``(t, tau)``
repeats the latest earlier revision of ``tau`` and a missing ``(tau, tau)``
is all zeros. Only revisions that change something are written.
"""
from __future__ import annotations

import json
import math

import numpy as np

from .core import UNBOUNDED, Commitment, RunTrace
from .environments import scripted_revisions


def feedback_entries(c: Commitment) -> list[dict]:
    out = []
    for i in range(c.T):
        tau = i + 1
        for g in range(min(c.window, c.T - tau) + 1):
            if g == 0 or np.any(c.revisions[i, g] != c.revisions[i, g - 1]):
                out.append({"t": tau + g, "tau": tau, "loss": c.revisions[i, g].tolist()})
    return out


def trace_to_dict(trace: RunTrace) -> dict:
    c = trace.commitment
    return {
        "K": c.K,
        "T": c.T,
        "d_max": None if math.isinf(c.d_max) else int(c.d_max),
        "seed": trace.seed,
        "true": c.true.tolist(),
        "feedback": feedback_entries(c),
        "actions": [int(a) + 1 for a in trace.actions],
        "sampling_probs": np.asarray(trace.sampling_probs).tolist(),
    }


def trace_from_dict(doc: dict) -> RunTrace:
    T, K = int(doc["T"]), int(doc["K"])
    true = np.asarray(doc["true"], dtype=np.float64).reshape(T, K)
    entries = [
        {"t": int(e["t"]), "tau": int(e["tau"]), "loss": e["loss"]} for e in doc.get("feedback", [])
    ]
    rev, _ = scripted_revisions(T, K, entries, strict=False)
    d_max = doc.get("d_max")
    c = Commitment(true=true, revisions=rev, d_max=UNBOUNDED if d_max is None else int(d_max))
    actions = np.asarray(doc.get("actions", []), dtype=np.int64) - 1
    probs = np.asarray(doc.get("sampling_probs", []), dtype=np.float64).reshape(len(actions), K)
    return RunTrace(c, actions, probs, seed=doc.get("seed"))


def save_trace(trace: RunTrace, path) -> None:
    with open(path, "w") as fh:
        json.dump(trace_to_dict(trace), fh)


def load_trace(path) -> RunTrace:
    with open(path) as fh:
        return trace_from_dict(json.load(fh))

