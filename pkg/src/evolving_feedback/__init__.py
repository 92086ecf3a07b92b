"""Online learning when feedback about past losses keeps changing."""

from .core import UNBOUNDED, Commitment, RunTrace, Violation, make_rng, validate_trace
from .environments import (
    EnvironmentSpec,
    evolution_horizon,
    feedback_loss,
    materialize_trace_skeleton,
    true_loss,
)
from .learners import EvolvingEWA, EvolvingFTRL, Skipping, importance_estimate, tune_ewa, tune_ftrl
from .metrics import accuracy_report, corruption_budget, inaccuracy_D, lambda_coeff, lambda_schedule, lambda_total
from .solver import RegularizerParams, kkt_residual, solve_argmin

__version__ = "0.1.0"
