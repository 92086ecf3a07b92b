import math

import numpy as np
import pytest

from evolving_feedback import metrics
from evolving_feedback.environments import EnvironmentSpec, materialize_trace_skeleton
from evolving_feedback.harness import (
    ExperimentConfig,
    bound_overlay,
    cor1_bound,
    cor2_shape,
    csv_text,
    exact_regret,
    parse_vary,
    regret_summary,
    run_batch,
    run_episode,
    run_experiment,
    sample_inverse_cdf,
    set_path,
    sweep,
    validate_batch,
    write_outputs,
    SUMMARY_COLUMNS,
)


def config(kind="delayed", K=2, T=50, params=None, learner=None, seeds=(0, 1, 2), base=None, env_seed=0):
    env = {"kind": kind, "K": K, "T": T, "seed": env_seed, "params": params or {}}
    if base is not None:
        env["base"] = base
    return ExperimentConfig.from_dict({
        "environment": env,
        "learner": learner or {"algo": "ewa", "eta": 0.3},
        "seeds": list(seeds),
    })


def test_single_action_has_zero_regret():
    trace = run_episode(config(K=1, learner={"algo": "ewa", "eta": 1.0}), 3)
    curve = regret_summary([trace], trace.true_losses)
    assert np.all(curve.mean == 0)


def test_episode_is_deterministic():
    cfg = config(kind="noisy_decay", K=3, T=80, learner={"algo": "ftrl", "eta": 0.1, "gamma": 2.0})
    a, b = run_episode(cfg, 17), run_episode(cfg, 17)
    assert np.array_equal(a.actions, b.actions)
    assert a.sampling_probs.tobytes() == b.sampling_probs.tobytes()


def test_seed_trace_independent_of_batch_membership():
    cfg = config(kind="delayed", K=3, T=60, params={"delay": 2},
                 learner={"algo": "ftrl", "eta": 0.2, "gamma": 1.0})
    alone = run_episode(cfg, 4)
    together = run_batch(cfg, [1, 4, 9]).trace(1)
    assert np.array_equal(alone.actions, together.actions)


def test_inverse_cdf_scans_in_index_order():
    p = np.array([[0.2, 0.3, 0.5]] * 5)
    u = np.array([0.0, 0.1999, 0.2, 0.5, 0.9999])
    assert sample_inverse_cdf(p, u).tolist() == [0, 0, 1, 2, 2]
    q = np.array([[0.3, 0.7 - 1e-17, 0.0]])
    assert sample_inverse_cdf(q, np.array([1.0 - 1e-17])).tolist() == [1]


def test_regret_of_comparator_is_zero():
    true = np.tile([0.1, 0.9], (20, 1))
    curve = regret_summary(np.zeros((3, 20), dtype=int), true)
    assert curve.final == 0 and curve.comparator == 0


def test_uniform_learner_regret():
    cfg = config(K=2, T=1000, base={"type": "constant", "loss": [0.25, 0.75]},
                 learner={"algo": "ewa", "eta": 1e-300}, seeds=range(200))
    res = run_experiment(cfg)
    assert abs(res.curve.final - 250) <= 3 * res.curve.final_stderr
    assert res.curve.final_stderr > 0


def test_small_instance_matches_enumeration():
    cfg = config(kind="noisy_decay", K=2, T=6, params={"cutoff": 2},
                 learner={"algo": "ftrl", "eta": 0.8, "gamma": 1.0}, seeds=range(20_000))
    res = run_experiment(cfg)
    exact = exact_regret(cfg)
    assert abs(res.curve.final - exact) <= 4 * res.curve.final_stderr


def test_cor1_endpoint_and_scaling():
    assert float(cor1_bound(2, 128, 0)) == pytest.approx(13.32, abs=5e-3)
    assert float(cor1_bound(2, 10, 2e9) / cor1_bound(2, 10, 1e9)) == pytest.approx(math.sqrt(2), rel=1e-8)


def test_cor2_shape_monotone_in_lambda():
    vals = [float(cor2_shape(4, 1000, lam)) for lam in (0, 10, 100, 1e4)]
    assert vals == sorted(vals)


def test_bound_overlay_aligned_with_curve():
    res = run_experiment(config(params={"delay": 3}))
    for kind in ("cor1", "cor2"):
        b = bound_overlay(kind, 2, res.report)
        assert b.shape == res.curve.mean.shape
        assert np.all(np.diff(b) >= 0)
    assert np.all(np.isnan(bound_overlay("none", 2, res.report)))
    assert bound_overlay("cor1", 2, res.report)[-1] == pytest.approx(float(cor1_bound(2, 50, res.report.D)))
    with pytest.raises(ValueError):
        bound_overlay("cor3", 2, res.report)


def test_delay_sweep_has_monotone_D():
    rows = sweep(config(T=200, seeds=(0, 1)), {"environment.params.delay": [0, 2, 4, 8, 16]})
    assert [r["value"] for r in rows] == ["0", "2", "4", "8", "16"]
    D = [r["D"] for r in rows]
    assert D == sorted(D) and D[0] == 0


def test_single_point_sweep_equals_run():
    cfg = config(params={"delay": 2})
    rows = sweep(cfg, {"environment.params.delay": [2]})
    assert len(rows) == 1
    direct = run_experiment(cfg).summary_row()
    assert {k: rows[0][k] for k in SUMMARY_COLUMNS} == direct


def test_sweep_records_failures_and_continues():
    rows = sweep(config(T=20), {"environment.params.delay": [1, -3, 2]})
    assert rows[1]["error"] and not rows[0].get("error") and not rows[2].get("error")


def test_outputs_are_byte_identical(tmp_path):
    cfg = config(kind="corrupted", params={"budget": 5}, learner={
        "algo": "skip", "d_max": 0, "inner": {"algo": "ftrl", "auto_tune": {"Lambda_bar": 0}}})
    for name in ("a", "b"):
        write_outputs(run_experiment(cfg), tmp_path / name)
    for f in ("summary.csv", "curve.csv", "rounds.csv", "accuracy.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    header = (tmp_path / "a" / "rounds.csv").read_text().splitlines()[0]
    assert header == "t,seed,action,true_loss,cum_regret,lambda_t,D_partial"
    lines = (tmp_path / "a" / "rounds.csv").read_text().splitlines()
    assert len(lines) == 1 + 3 * 50
    assert {int(line.split(",")[2]) for line in lines[1:]} <= {1, 2}


def test_validate_batch_clean_for_every_kind():
    for kind, params in [("delayed", {"delay": 3}), ("corrupted", {"budget": 4}),
                         ("composite", {"d": 3, "pattern": "negative"}), ("noisy_decay", {}),
                         ("optimistic_delayed", {"delay": 2})]:
        for learner in ({"algo": "ewa", "eta": 0.3}, {"algo": "ftrl", "eta": 0.3, "gamma": 3.0}):
            batch = run_batch(config(kind=kind, params=params, learner=learner))
            assert validate_batch(batch) == []


def test_config_validation():
    with pytest.raises(ValueError):
        config(seeds=())
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"environment": {"kind": "delayed", "K": 2, "T": 5},
                                    "learner": {"algo": "ewa", "eta": 1}, "T": 6})
    cfg = ExperimentConfig.from_dict({"environment": {"kind": "delayed", "K": 2, "T": 5},
                                      "learner": {"algo": "ewa", "eta": 1}, "seeds": {"start": 3, "count": 2}})
    assert cfg.seeds == [3, 4]
    assert ExperimentConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


def test_parse_vary_and_set_path():
    assert parse_vary("environment.params.delay=0, 2,4") == ("environment.params.delay", [0, 2, 4])
    assert parse_vary("learner.algo=ewa,ftrl")[1] == ["ewa", "ftrl"]
    with pytest.raises(ValueError):
        parse_vary("nothing")
    d = {}
    set_path(d, "a.b.c", 1)
    assert d == {"a": {"b": {"c": 1}}}


def test_csv_floats_round_trip():
    text = csv_text(["x"], [{"x": 0.1 + 0.2}])
    assert float(text.splitlines()[1]) == 0.1 + 0.2


def test_exact_regret_rejects_large():
    with pytest.raises(ValueError):
        exact_regret(config(T=13))
