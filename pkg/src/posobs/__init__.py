"""Positive interval observers with stabilizing feedback for discrete-time positive systems."""

from .errors import (DimensionError, MissingNoiseModelError, NumericalFailure, PosobsError,
                     ScenarioError, SingularMatrixError)
from .linalg import eigenvalues, solve_linear, spectral_radius
from .lp import LpProblem, lp_feasibility_with_margin, lp_solve, schur_certificate
from .model import (ConditionReport, GainSet, PositiveSystem, build_error_dynamics,
                    build_extended_closed_loop, certify, check_generic_conditions,
                    check_invariance_conditions, check_noise_conditions, check_stability,
                    validate_system)
from .sim import (NoiseConfig, Trajectory, check_ordering, expected_fixed_point,
                  monte_carlo_mean, sample_gamma_unit_mean, simulate_deterministic,
                  simulate_noisy)
from .synthesis import (SynthesisRequest, SynthesisResult, find_necessity_counterexample,
                        synth_full, synth_observer_gain, synth_state_feedback)

__version__ = "0.1.0"
