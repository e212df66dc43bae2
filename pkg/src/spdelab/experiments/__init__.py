"""Monte Carlo experiments and their reports."""

from .report import Criterion, Curve, ExperimentReport
from .suites import (RUNNERS, ExperimentError, deterministic_crossing, entry_times, estimate_c0,
                     growth_parameters, ou_stationary_variance, run, run_ball_entry,
                     run_boundary_layer, run_comparison, run_contraction, run_energy,
                     run_ergodic_coupling, run_invariant_measure, run_irreducibility,
                     run_kinetic, run_linear_oracle, run_negative_control, run_validate)

__all__ = ["Criterion", "Curve", "ExperimentReport", "ExperimentError", "RUNNERS", "run",
           "run_ball_entry", "run_boundary_layer", "run_comparison", "run_contraction",
           "run_energy", "run_ergodic_coupling", "run_invariant_measure", "run_irreducibility",
           "run_kinetic", "run_linear_oracle", "run_negative_control", "run_validate",
           "deterministic_crossing", "entry_times", "estimate_c0", "growth_parameters",
           "ou_stationary_variance"]
