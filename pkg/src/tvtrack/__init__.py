"""Prediction-update tracking for time-varying convex optimization.

First-order prediction rules (with sampled-difference and hybrid
variants) against gradient-descent and Hessian-solve baselines, the
closed-form tracking-error calculus that goes with them, a benchmark
problem library, and a receding-horizon control example, all behind a
reproducible experiment CLI.
"""

from tvtrack.costs import (CapabilitySet, CostEvaluation, EvalPoint,
                           RegularityConstants, estimate_constants, evaluate,
                           fd_grad_t, fd_grad_xt, make_problem)
from tvtrack.engine import (SolverConfig, StepRecord, Trajectory, run,
                            tracking_error_summary, update_gd)
from tvtrack.predict import (Branch, PredictionOutcome, predict_alg1,
                             predict_alg2, predict_alg3, predict_alg4,
                             predict_euler_second_order, predict_identity)
from tvtrack.bounds import BoundReport, bound_report, check_bound, epsilon_star, psi
from tvtrack.errors import (BoundViolation, CapabilityError, ConfigError,
                            NotSPDError, NumericalAbort)

__version__ = "0.1.0"
