"""Episode runner, regret estimation, bound overlays and sweeps.

Seeds only drive the agent's sampling; the adversary is fixed by the
environment's own seed, so every seed faces the same loss table. Episodes
for many seeds are simulated as one vectorized batch, each seed drawing its
uniforms from its own Philox stream, so a seed's trace does not depend on
which other seeds share the batch.
"""
from __future__ import annotations

import copy
import csv
import io
import itertools
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .core import AGENT_STREAM, Commitment, RunTrace, make_rng, validate_commitment, validate_play
from .environments import EnvironmentSpec, materialize_trace_skeleton
from .learners import make_learner
from .oracle import best_action_hindsight, exhaustive_regret_small
from .solver import ConvergenceError

log = logging.getLogger(__name__)

ROUND_COLUMNS = ["t", "seed", "action", "true_loss", "cum_regret", "lambda_t", "D_partial"]
SUMMARY_COLUMNS = [
    "T", "mean_regret", "stderr", "bound_cor1", "bound_cor2_shape", "D", "Lambda", "lambda_sum", "C",
]
CURVE_COLUMNS = ["t", "mean_regret", "stderr", "bound"]
OVERLAYS = ("cor1", "cor2", "none")


def strict_gamma_from_env() -> bool:
    return os.environ.get("EVOLVE_STRICT_GAMMA", "") == "1"


@dataclass
class ExperimentConfig:
    environment: EnvironmentSpec
    learner: dict
    seeds: list
    overlay: str = "cor1"
    bound_constant: float = 1.0

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if self.overlay not in OVERLAYS:
            raise ValueError(f"overlay must be one of {OVERLAYS}")

    @property
    def T(self) -> int:
        return self.environment.T

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        env = EnvironmentSpec.from_dict(d["environment"])
        if "T" in d and int(d["T"]) != env.T:
            raise ValueError(f"config T={d['T']} disagrees with environment T={env.T}")
        seeds = d.get("seeds", [0])
        if isinstance(seeds, dict):
            seeds = list(range(int(seeds.get("start", 0)), int(seeds.get("start", 0)) + int(seeds["count"])))
        return cls(
            environment=env,
            learner=dict(d["learner"]),
            seeds=[int(s) for s in seeds],
            overlay=d.get("overlay", "cor1"),
            bound_constant=float(d.get("bound_constant", 1.0)),
        )

    def to_dict(self) -> dict:
        return {
            "environment": self.environment.to_dict(),
            "learner": copy.deepcopy(self.learner),
            "seeds": list(self.seeds),
            "overlay": self.overlay,
            "bound_constant": self.bound_constant,
        }


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return ExperimentConfig.from_dict(json.load(fh))


@dataclass
class Batch:
    """Actions ``(S, T)`` and sampling distributions, ``(T, K)`` when shared by all seeds."""

    commitment: Commitment
    seeds: list
    actions: np.ndarray
    probs: np.ndarray
    shared_probs: bool
    rounds_played: int
    error: str | None = None

    def probs_for(self, i: int) -> np.ndarray:
        return self.probs if self.shared_probs else self.probs[i]

    def trace(self, i: int) -> RunTrace:
        n = self.rounds_played
        return RunTrace(
            self.commitment,
            self.actions[i, :n],
            self.probs_for(i)[:n],
            seed=self.seeds[i],
            error=self.error,
        )

    def traces(self) -> list[RunTrace]:
        return [self.trace(i) for i in range(len(self.seeds))]


def sample_inverse_cdf(p: np.ndarray, u: np.ndarray) -> np.ndarray:
    """First index whose running sum exceeds ``u``, scanning actions in index order."""
    cdf = np.cumsum(p, axis=-1)
    a = np.sum(cdf <= u[:, None], axis=-1)
    # u can exceed a rounded-down total; fall back to the last action with mass.
    last = p.shape[-1] - 1 - np.argmax(p[..., ::-1] > 0, axis=-1)
    return np.minimum(a, last)


def seed_uniforms(seeds, T: int) -> np.ndarray:
    return np.stack([make_rng(s, AGENT_STREAM).random(T) for s in seeds]) if len(seeds) else np.zeros((0, T))


def learner_context(commitment: Commitment, report=None) -> dict:
    report = report if report is not None else metrics.accuracy_report(commitment)
    return {"D": report.D, "lambda_sum": report.lambda_sum, "Lambda": report.Lambda}


def simulate(commitment: Commitment, learner, seeds) -> Batch:
    """Play ``learner`` against ``commitment`` once per seed, all seeds in one batch.

    A learner failure (solver non-convergence) truncates the batch at the
    failing round and records the error.
    """
    seeds = [int(s) for s in seeds]
    T, K = commitment.T, commitment.K
    S = len(seeds)
    U = seed_uniforms(seeds, T)
    learner.reset(K, S, commitment.window)
    shared = learner.full_information
    actions = np.zeros((S, T), dtype=np.int64)
    probs = np.zeros((T, K)) if shared else np.zeros((S, T, K))
    window = commitment.window
    played, error = T, None
    for t in range(1, T + 1):
        try:
            p = learner.act(t)
        except ConvergenceError as exc:
            played, error = t - 1, f"round {t}: {exc}"
            log.error("episode truncated: %s", error)
            break
        if shared:
            probs[t - 1] = p
            a = sample_inverse_cdf(np.broadcast_to(p, (S, K)), U[:, t - 1])
        else:
            probs[:, t - 1] = p
            a = sample_inverse_cdf(p, U[:, t - 1])
        actions[:, t - 1] = a
        block = commitment.active_block(t, window)
        if shared:
            payload = block
        else:
            taus = np.arange(t - len(block) + 1, t + 1)
            payload = block[np.arange(len(block))[None, :], actions[:, taus - 1]]
        learner.observe(t, a, payload)
    return Batch(commitment, seeds, actions, probs, shared, played, error)


def build_learner(config: ExperimentConfig, commitment: Commitment, report=None):
    return make_learner(
        config.learner,
        commitment.K,
        commitment.T,
        measured=learner_context(commitment, report),
        env_d_max=commitment.d_max,
        strict_gamma=strict_gamma_from_env(),
    )


def run_batch(config: ExperimentConfig, seeds=None) -> Batch:
    commitment = materialize_trace_skeleton(config.environment)
    learner = build_learner(config, commitment)
    return simulate(commitment, learner, config.seeds if seeds is None else seeds)


def run_episode(config: ExperimentConfig, seed: int) -> RunTrace:
    return run_batch(config, [seed]).trace(0)


# -- regret -------------------------------------------------------------------


@dataclass
class RegretCurve:
    mean: np.ndarray
    stderr: np.ndarray
    comparator: int
    per_seed_final: np.ndarray = field(repr=False)

    @property
    def final(self) -> float:
        return float(self.mean[-1]) if len(self.mean) else 0.0

    @property
    def final_stderr(self) -> float:
        return float(self.stderr[-1]) if len(self.stderr) else 0.0


def realized_regret(actions: np.ndarray, true: np.ndarray) -> tuple[np.ndarray, int]:
    """Per-seed cumulative realized regret ``(S, n)`` against the best action in hindsight."""
    true = np.asarray(true, dtype=np.float64)
    actions = np.atleast_2d(np.asarray(actions))
    n = actions.shape[1]
    a_star, _ = best_action_hindsight(true)
    incurred = true[np.arange(n)[None, :], actions]
    return np.cumsum(incurred - true[:n, a_star][None, :], axis=1), a_star


def regret_summary(traces, true_losses) -> RegretCurve:
    """Seed-averaged cumulative regret per round with its standard error.

    ``traces`` is a list of :class:`RunTrace`, a :class:`Batch` or an
    ``(S, T)`` action array.
    """
    if isinstance(traces, Batch):
        actions = traces.actions[:, : traces.rounds_played]
    elif isinstance(traces, np.ndarray):
        actions = traces
    else:
        if not traces:
            raise ValueError("need at least one trace")
        n = min(len(tr.actions) for tr in traces)
        actions = np.stack([tr.actions[:n] for tr in traces])
    cum, a_star = realized_regret(actions, true_losses)
    S = cum.shape[0]
    mean = cum.mean(axis=0)
    stderr = cum.std(axis=0, ddof=1) / math.sqrt(S) if S > 1 else np.zeros_like(mean)
    return RegretCurve(mean, stderr, a_star, cum[:, -1] if cum.shape[1] else np.zeros(S))


# -- bounds -------------------------------------------------------------------


def cor1_bound(K: int, T, D_bar) -> np.ndarray:
    """``sqrt(4 ln K (T/2 + 2 D_bar))``, elementwise."""
    T = np.asarray(T, dtype=np.float64)
    return np.sqrt(4.0 * math.log(K) * (T / 2.0 + 2.0 * np.asarray(D_bar, dtype=np.float64)))


def cor2_shape(K: int, T, Lambda_bar, c: float = 1.0) -> np.ndarray:
    """``c sqrt(K T + Lambda_bar) ln T``; the constant is for display only."""
    T = np.asarray(T, dtype=np.float64)
    return c * np.sqrt(K * T + np.asarray(Lambda_bar, dtype=np.float64)) * np.log(T)


def bound_overlay(kind: str, K: int, report: metrics.AccuracyReport, c: float = 1.0) -> np.ndarray:
    """Bound value at every prefix horizon ``t = 1..T``.

    ``cor1`` uses the measured partial ``D`` up to ``t``; ``cor2`` uses the
    partial sum of ``lambda_t`` and is a shape-only curve.
    """
    T = len(report.D_partial)
    t = np.arange(1, T + 1)
    if kind == "cor1":
        return cor1_bound(K, t, report.D_partial)
    if kind == "cor2":
        return cor2_shape(K, t, np.cumsum(report.lambda_t), c)
    if kind == "none":
        return np.full(T, np.nan)
    raise ValueError(f"unknown overlay {kind!r}")


# -- experiment-level outputs -------------------------------------------------


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    batch: Batch
    report: metrics.AccuracyReport
    curve: RegretCurve

    def summary_row(self) -> dict:
        K, T = self.batch.commitment.K, self.batch.rounds_played
        r = self.report
        return {
            "T": T,
            "mean_regret": self.curve.final,
            "stderr": self.curve.final_stderr,
            "bound_cor1": float(cor1_bound(K, T, r.D)),
            "bound_cor2_shape": float(cor2_shape(K, T, r.lambda_sum, self.config.bound_constant)),
            "D": r.D,
            "Lambda": r.Lambda,
            "lambda_sum": r.lambda_sum,
            "C": r.corruption_budget,
        }


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    commitment = materialize_trace_skeleton(config.environment)
    report = metrics.accuracy_report(commitment)
    learner = build_learner(config, commitment, report)
    batch = simulate(commitment, learner, config.seeds)
    curve = regret_summary(batch, commitment.true)
    return ExperimentResult(config, batch, report, curve)


def validate_batch(batch: Batch, d_max: float | None = None) -> list:
    """Trace-invariant violations over every seed of a batch."""
    d = batch.commitment.d_max if d_max is None else d_max
    out = validate_commitment(batch.commitment, d)
    n = batch.rounds_played
    if batch.shared_probs:
        out += validate_play(batch.actions[:, :n].reshape(-1), np.tile(batch.probs[:n], (len(batch.seeds), 1)), batch.commitment.K)
    else:
        out += validate_play(batch.actions[:, :n].reshape(-1), batch.probs[:, :n].reshape(-1, batch.commitment.K), batch.commitment.K)
    return out


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def round_rows(result: ExperimentResult, max_seeds: int | None = None):
    batch, report = result.batch, result.report
    true = batch.commitment.true
    n = batch.rounds_played
    cum, _ = realized_regret(batch.actions[:, :n], true)
    S = len(batch.seeds) if max_seeds is None else min(max_seeds, len(batch.seeds))
    for i in range(S):
        for t in range(n):
            a = int(batch.actions[i, t])
            yield {
                "t": t + 1,
                "seed": batch.seeds[i],
                "action": a + 1,
                "true_loss": float(true[t, a]),
                "cum_regret": float(cum[i, t]),
                "lambda_t": float(report.lambda_t[t]),
                "D_partial": float(report.D_partial[t]),
            }


def curve_rows(result: ExperimentResult):
    K = result.batch.commitment.K
    bound = bound_overlay(result.config.overlay, K, result.report, result.config.bound_constant)
    for t in range(len(result.curve.mean)):
        yield {
            "t": t + 1,
            "mean_regret": float(result.curve.mean[t]),
            "stderr": float(result.curve.stderr[t]),
            "bound": None if np.isnan(bound[t]) else float(bound[t]),
        }


def write_outputs(result: ExperimentResult, out_dir, max_round_seeds: int | None = None) -> dict:
    """Write ``summary.csv``, ``curve.csv``, ``rounds.csv`` and ``accuracy.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "summary": out / "summary.csv",
        "curve": out / "curve.csv",
        "rounds": out / "rounds.csv",
        "accuracy": out / "accuracy.json",
    }
    paths["summary"].write_text(csv_text(SUMMARY_COLUMNS, [result.summary_row()]))
    paths["curve"].write_text(csv_text(CURVE_COLUMNS, curve_rows(result)))
    paths["rounds"].write_text(csv_text(ROUND_COLUMNS, round_rows(result, max_round_seeds)))
    paths["accuracy"].write_text(json.dumps(result.report.to_dict(), sort_keys=True, indent=2) + "\n")
    return paths


# -- sweeps -------------------------------------------------------------------


def parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_vary(spec: str) -> tuple[str, list]:
    """``'environment.params.delay=0,2,4'`` -> ``('environment.params.delay', [0, 2, 4])``."""
    if "=" not in spec:
        raise ValueError(f"--vary needs <param>=<v1,v2,...>, got {spec!r}")
    name, values = spec.split("=", 1)
    vals = [parse_value(v.strip()) for v in values.split(",") if v.strip()]
    if not vals:
        raise ValueError(f"--vary {name} has no values")
    return name.strip(), vals


def set_path(d: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    for k in keys[:-1]:
        d = d.setdefault(k, {})
    d[keys[-1]] = value


SWEEP_COLUMNS = ["parameter", "value"] + SUMMARY_COLUMNS + ["error"]


def sweep(base: ExperimentConfig, grid: dict) -> list[dict]:
    """One summary row per point of the Cartesian ``grid`` (dotted config path -> values).

    Rows follow the grid's insertion order; a failing point yields a row
    with ``error`` set and the sweep continues.
    """
    names = list(grid)
    rows = []
    for combo in itertools.product(*(grid[n] for n in names)):
        cfg = base.to_dict()
        for name, value in zip(names, combo):
            set_path(cfg, name, value)
        row = {
            "parameter": ";".join(names),
            "value": ";".join(json.dumps(v) for v in combo),
        }
        try:
            result = run_experiment(ExperimentConfig.from_dict(cfg))
            row.update(result.summary_row())
            if result.batch.error:
                row["error"] = result.batch.error
        except (ValueError, ArithmeticError) as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows


def exact_regret(config: ExperimentConfig, max_paths: int = 4096) -> float:
    """Exact expected regret of a small configuration by path enumeration."""
    commitment = materialize_trace_skeleton(config.environment)
    report = metrics.accuracy_report(commitment)
    return exhaustive_regret_small(commitment, lambda: build_learner(config, commitment, report), max_paths)
