import numpy as np
import pytest

from conftest import accurate_commitment
from evolving_feedback.learners import EvolvingEWA, EvolvingFTRL
from evolving_feedback.oracle import (
    OracleResult,
    best_action_hindsight,
    exhaustive_regret_small,
    grid_argmin_simplex,
    mc_unbiasedness,
    simplex_grid,
)
from evolving_feedback.solver import RegularizerParams, softmax


def test_grid_is_interior_and_on_simplex():
    g = simplex_grid(3, 100)
    assert np.allclose(g.sum(axis=1), 1)
    assert g.min() >= 1 / (2 * 100 + 3) - 1e-15


def test_symmetric_L_gives_uniform():
    p = grid_argmin_simplex(np.ones(3), RegularizerParams(0.5, 0.1))
    assert np.allclose(p, 1 / 3, atol=1e-2)


def test_barrier_free_matches_softmax():
    L = np.array([0.2, 1.7, 0.9, 3.0])
    p = grid_argmin_simplex(L, RegularizerParams(0.8, 0.0))
    assert np.max(np.abs(p - softmax(L, 0.8))) <= 1e-6


def test_grid_oracle_preconditions():
    with pytest.raises(ValueError):
        grid_argmin_simplex(np.zeros(5), RegularizerParams(1.0))
    with pytest.raises(ValueError):
        grid_argmin_simplex(np.zeros(3), RegularizerParams(1.0), resolution=50)


def test_best_action_examples():
    assert best_action_hindsight([[0.1, 0.9]] * 4) == (0, pytest.approx(0.4))
    assert best_action_hindsight([[0.5, 0.5, 0.5]] * 3)[0] == 0
    table = np.random.default_rng(2).random((50, 5))
    sums = [sum(row[a] for row in table) for a in range(5)]
    a, total = best_action_hindsight(table)
    assert a == int(np.argmin(sums)) and total == pytest.approx(min(sums))
    with pytest.raises(ValueError):
        best_action_hindsight(np.zeros((0, 2)))


def test_mc_unbiasedness_examples():
    mean, se, z = mc_unbiasedness([0.8, 0.4], [0.5, 0.5], 100_000, seed=1)
    assert np.all(z <= 3)
    mean, se, z = mc_unbiasedness([0.0, 0.0], [0.3, 0.7], 10_000)
    assert np.all(mean == 0) and np.all(se == 0) and np.all(z == 0)
    mean, se, z = mc_unbiasedness([0.6, 0.9], [0.99, 0.01], 100_000, seed=2)
    assert np.all(z <= 3) and se[1] > se[0]
    with pytest.raises(ValueError):
        mc_unbiasedness([0.1], [1.0], 100)


def test_mc_is_deterministic_given_seed():
    a = mc_unbiasedness([0.3, 0.2, 0.1], [0.2, 0.3, 0.5], 20_000, seed=9)
    b = mc_unbiasedness([0.3, 0.2, 0.1], [0.2, 0.3, 0.5], 20_000, seed=9)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_exhaustive_one_round_closed_form():
    true = np.array([[0.3, 0.8]])
    c = accurate_commitment(true)
    r = exhaustive_regret_small(c, lambda: EvolvingEWA(1.0))
    assert r == pytest.approx(0.5 * 0.3 + 0.5 * 0.8 - 0.3, abs=1e-15)


def test_exhaustive_near_deterministic_learner_follows_greedy_path():
    true = np.array([[0.0, 1.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    c = accurate_commitment(true)
    # Huge eta: play uniformly in round 1 (no data), then follow the leader.
    r = exhaustive_regret_small(c, lambda: EvolvingEWA(1e3))
    leader_loss = 0.5 * 1.0  # round 1 uniform
    L = true[0].copy()
    for t in range(1, len(true)):
        if L[0] == L[1]:
            leader_loss += true[t].mean()
        else:
            leader_loss += true[t, int(np.argmin(L))]
        L += true[t]
    assert r == pytest.approx(leader_loss - true.sum(axis=0).min(), abs=1e-9)


def test_exhaustive_bandit_one_round():
    true = np.array([[0.2, 0.6]])
    c = accurate_commitment(true)
    r = exhaustive_regret_small(c, lambda: EvolvingFTRL(RegularizerParams(0.5, 0.1)))
    assert r == pytest.approx(0.2, abs=1e-15)


def test_exhaustive_rejects_large_instances():
    c = accurate_commitment(np.zeros((13, 2)))
    with pytest.raises(ValueError):
        exhaustive_regret_small(c, lambda: EvolvingEWA(1.0))


def test_oracle_result_to_dict():
    d = OracleResult(np.array([0.5, 0.5]), "x", 100).to_dict()
    assert d == {"value": [0.5, 0.5], "method": "x", "resolution": 100}
