import numpy as np
import pytest

from evolving_feedback.core import Commitment, RunTrace


def accurate_commitment(true, window=0, d_max=0):
    true = np.asarray(true, dtype=np.float64)
    rev = np.repeat(true[:, None, :], window + 1, axis=1)
    return Commitment(true=true, revisions=rev, d_max=d_max)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def uniform_trace():
    def make(commitment):
        T, K = commitment.T, commitment.K
        return RunTrace(commitment, np.zeros(T, dtype=np.int64), np.full((T, K), 1.0 / K))

    return make


# Acceptance verdicts, filled in by test_acceptance.py and printed at the end of the run.
ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: desk-scale acceptance criteria (slow)")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
