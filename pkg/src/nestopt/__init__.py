"""Single time-scale stochastic subgradient method for nested compositions.

A solver library plus experiment CLI for constrained problems of the form
min_{x in X} f_1(x, f_2(x, ... f_M(x) ...)) where every level is observed
only through noisy value and Jacobian samples.  One stepsize sequence
drives the iterate, a filtered subgradient average, and filtered trackers
of all nested values simultaneously.
"""

from .diagnostics import (DiagnosticsConfig, ObjectiveTailReport,
                          RandomIterateMeasure, RunRecord,
                          TrackingBoundReport, default_gammas, fit_rate,
                          lyapunov_nonsmooth, lyapunov_smooth,
                          objective_tail_oscillation, optimality_measure,
                          random_iterate_measure, tracking_error_bound_check)
from .errors import (CompoptError, ConfigError, InsufficientReplicationsError,
                     InvalidHorizonError, InvalidParamError,
                     MissingExactEvaluatorsError, NonFiniteIterateError,
                     ProjectionError, ScheduleExhaustedError, SolverSetupError,
                     UnknownFamilyError)
from .model import (AlgorithmParams, CompositionProblem, Constant, Custom,
                    Diminishing, ExactEvaluators, InitPolicy, IterateState,
                    StepSchedule, Violation, init_state, next_stepsize,
                    stepsize_cap, validate_problem)
from .oracles import (DeterministicOracle, LevelOracle, NoiseModel, NoisyOracle,
                      OracleSample, finite_difference_reference, level_streams,
                      sample_level)
from .sets import (Ball, Box, CustomSet, FeasibleSet, Polytope, Simplex, gap,
                   is_stationary, optimality_residual, solve_subproblem)
from .solver import (IterationTrace, assemble_subgradient, run, step,
                     update_trackers, update_z)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
