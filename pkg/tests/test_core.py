import math

import numpy as np
import pytest

from conftest import accurate_commitment
from evolving_feedback.core import (
    UNBOUNDED,
    Commitment,
    FeedbackUpdate,
    RunTrace,
    as_loss_vector,
    check_distribution,
    make_rng,
    validate_trace,
)
from evolving_feedback.environments import scripted_revisions


def test_make_rng_reproducible_and_stream_separated():
    a = make_rng(7).random(5)
    b = make_rng(7).random(5)
    c = make_rng(7, stream=1).random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_make_rng_rejects_out_of_range_seed():
    with pytest.raises(ValueError):
        make_rng(-1)
    with pytest.raises(ValueError):
        make_rng(2**64)


def test_loss_vector_range_is_closed_and_exact():
    as_loss_vector([0.0, 1.0])
    with pytest.raises(ValueError):
        as_loss_vector([0.0, 1.0 + 1e-16 * 4])
    with pytest.raises(ValueError):
        as_loss_vector([0.2, 0.3], K=3)


def test_feedback_update_orders_rounds():
    FeedbackUpdate(2, 2, (0.1, 0.2))
    with pytest.raises(ValueError):
        FeedbackUpdate(3, 2, (0.1, 0.2))
    with pytest.raises(ValueError):
        FeedbackUpdate(1, 1, (1.5,))


def test_check_distribution():
    check_distribution([0.25, 0.75])
    with pytest.raises(ValueError):
        check_distribution([0.0, 1.0])
    with pytest.raises(ValueError):
        check_distribution([0.5, 0.6])


def test_commitment_feedback_freezes_beyond_window():
    true = np.array([[0.4, 0.9], [0.1, 0.2], [0.3, 0.3], [0.5, 0.5]])
    rev = np.zeros((4, 2, 2))
    rev[:, 1] = true
    c = Commitment(true, rev, d_max=1)
    assert np.array_equal(c.feedback(1, 1), [0, 0])
    assert np.array_equal(c.feedback(2, 1), true[0])
    assert np.array_equal(c.feedback(4, 1), true[0])
    with pytest.raises(IndexError):
        c.feedback(1, 2)
    assert c.active_block(3).shape == (2, 2)
    assert np.array_equal(c.active_block(3)[0], true[1])


def test_commitment_is_read_only():
    c = accurate_commitment([[0.1, 0.2]])
    with pytest.raises(ValueError):
        c.true[0, 0] = 0.5


def _scripted(T, K, true, entries, d_max):
    rev, _ = scripted_revisions(T, K, entries, strict=False)
    c = Commitment(np.asarray(true, dtype=float), rev, d_max=d_max)
    return RunTrace(c, np.zeros(T, dtype=np.int64), np.full((T, K), 1.0 / K))


def test_frozen_rule_violation_is_named():
    true = [[0.5]] * 5
    entries = [{"t": t, "tau": 1, "loss": [0.5]} for t in range(1, 5)]
    entries.append({"t": 5, "tau": 1, "loss": [0.7]})
    entries += [{"t": tau, "tau": tau, "loss": [0.5]} for tau in range(2, 6)]
    violations = validate_trace(_scripted(5, 1, true, entries, 2), 2)
    assert len(violations) == 1
    v = violations[0]
    assert (v.t, v.tau, v.rule) == (5, 1, "frozen_after_d_max")


def test_accurate_trace_has_no_violations():
    true = np.random.default_rng(0).random((6, 3))
    c = accurate_commitment(true)
    trace = RunTrace(c, np.arange(6) % 3, np.full((6, 3), 1 / 3))
    assert validate_trace(trace, 0) == []


def test_out_of_range_loss_is_one_violation():
    entries = [
        {"t": 1, "tau": 1, "loss": [0.2, 1.5]},
        {"t": 2, "tau": 1, "loss": [0.2, 1.0]},
        {"t": 2, "tau": 2, "loss": [0.0, 0.0]},
    ]
    trace = _scripted(2, 2, [[0.2, 1.0], [0.0, 0.0]], entries, 1)
    violations = validate_trace(trace, 1)
    assert len(violations) == 1
    assert violations[0][:3] == (1, 1, "feedback_range")


def test_bad_distribution_is_reported():
    c = accurate_commitment([[0.1, 0.2], [0.3, 0.4]])
    trace = RunTrace(c, np.array([0, 1]), np.array([[0.5, 0.5], [1.0, 0.0]]))
    violations = validate_trace(trace, 0)
    assert [(v.t, v.rule) for v in violations] == [(2, "distribution")]


def test_unbounded_d_max_never_flags_freezing():
    true = [[0.5]] * 3
    entries = [{"t": 1, "tau": 1, "loss": [0.1]}, {"t": 3, "tau": 1, "loss": [0.9]}]
    assert validate_trace(_scripted(3, 1, true, entries, UNBOUNDED), math.inf) == []
