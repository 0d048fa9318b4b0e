"""Secure linear sensor synthesis for controlled Gauss-Markov processes.

A sensor that must disclose state information to a controller which may have
been silently infiltrated can commit, in advance, to memoryless linear output
maps that trade regulation performance against the damage an undetected
attacker could cause.  This package computes those maps by a chained-PSD
semidefinite relaxation, extracts the per-stage gains from its solution, and
evaluates designs analytically and by closed-loop simulation against the
classical (full disclosure) and no-sensor baselines.
"""

from .model import (AttackerSpec, FriendlyObjective, SystemModel,
                    ValidationReport, generate_random_instance, validate)
from .gauss import (CovarianceLadder, EstimatorState, batch_conditional_H,
                    estimator_step, propagate_open_loop, psd_pinv_sqrt, psd_sqrt)
from .riccati import (AdversarialTables, FriendlyTables, adversarial_tables,
                      friendly_tables, truncated_sensor_tables)
from .scenarios import (JumpScenario, ScenarioSet, assign_measures,
                        derive_transitions, enumerate_typical)
from .stacked import (build_adversary_stack, build_friendly_stack,
                      build_operator_suite, build_psi_and_F,
                      build_scenario_operator)
from .conic import SdpOptions
from .design import (ObjectiveCoefficients, SdpSolution, SensorDesign,
                     assemble_objective, extract_gains, secure_sensor_design,
                     solve_chained_sdp)
from .evaluate import (EvaluationReport, analytic_cost, baseline_design,
                       compare, simulate_closed_loop)

__version__ = "0.1.0"

__all__ = [
    "AttackerSpec", "FriendlyObjective", "SystemModel", "ValidationReport",
    "generate_random_instance", "validate",
    "CovarianceLadder", "EstimatorState", "batch_conditional_H",
    "estimator_step", "propagate_open_loop", "psd_pinv_sqrt", "psd_sqrt",
    "AdversarialTables", "FriendlyTables", "adversarial_tables",
    "friendly_tables", "truncated_sensor_tables",
    "JumpScenario", "ScenarioSet", "assign_measures", "derive_transitions",
    "enumerate_typical",
    "build_adversary_stack", "build_friendly_stack", "build_operator_suite",
    "build_psi_and_F", "build_scenario_operator",
    "SdpOptions", "ObjectiveCoefficients", "SdpSolution", "SensorDesign",
    "assemble_objective", "extract_gains", "secure_sensor_design",
    "solve_chained_sdp",
    "EvaluationReport", "analytic_cost", "baseline_design", "compare",
    "simulate_closed_loop",
    "__version__",
]
