"""Geometric control of underactuated mechanical systems.

Simple mechanical systems (inertia tensor, potential, isotropic damping,
body-frame force covectors) with:

- a differential-geometry kernel (Christoffel symbols, covariant derivative,
  Lie bracket, symmetric product, state-space lifts with homogeneity classes),
- a fixed-step simulator and input reconstruction along trajectories,
- a perturbation series for the forced response from rest,
- kinematic controllability (decoupling vector fields, rank tests, motion
  plans that the full dynamics can track exactly),
- small-amplitude oscillatory control synthesis and averaging analysis,
- a library of benchmark models and a CLI to run experiments from configs.
"""

from .errors import (
    ConfigError,
    GeoctrlError,
    NonFiniteStateError,
    RankDeficientInputsError,
    ResidualViolationError,
    SingularInertiaError,
    SpanAssumptionError,
    UnknownModelError,
)
from .geometry import (
    ChristoffelTensor,
    LiftedVectorField,
    MechanicalSystem,
    VectorField,
    christoffel,
    christoffel_cache,
    covariant_derivative,
    damping_lift,
    geodesic_spray,
    homogeneity_error,
    lie_bracket,
    lift,
    lifted_lie_bracket,
    symmetric_product,
)
from .kinematic import (
    ControllabilityReport,
    DecouplingCandidate,
    PlanSegment,
    TimeScaling,
    candidate_from_direction,
    decoupling_residual,
    find_decoupling_fields,
    kinematic_controllability,
    kinematic_plan,
    larc_rank,
    quadratic_forms,
)
from .models import ModelDescriptor, build, list_models, make
from .oscillatory import (
    AveragedGains,
    AveragedSystem,
    ConvergenceStudy,
    OscillatoryControl,
    SpanCoefficients,
    averaged_iterated_integral,
    averaged_system,
    convergence_study,
    fast_parts,
    general_averaged_forcing,
    lexicographic_enumeration,
    psi,
    span_coefficients,
    synthesis_audit,
    synthesize_controls,
    worker_count,
)
from .series import ForcingField, SeriesTerm, predict_from_rest, series_terms, truncation_errors
from .simulation import (
    ControlLaw,
    IntegratorConfig,
    State,
    Trajectory,
    dynamics_rhs,
    read_trajectory_csv,
    reconstruct_inputs,
    simulate,
    simulate_forced,
)

__version__ = "0.1.0"

__all__ = [
    "AveragedGains",
    "AveragedSystem",
    "ChristoffelTensor",
    "ConfigError",
    "ControlLaw",
    "ControllabilityReport",
    "ConvergenceStudy",
    "DecouplingCandidate",
    "ForcingField",
    "GeoctrlError",
    "IntegratorConfig",
    "LiftedVectorField",
    "MechanicalSystem",
    "ModelDescriptor",
    "NonFiniteStateError",
    "OscillatoryControl",
    "PlanSegment",
    "RankDeficientInputsError",
    "ResidualViolationError",
    "SeriesTerm",
    "SingularInertiaError",
    "SpanAssumptionError",
    "SpanCoefficients",
    "State",
    "TimeScaling",
    "Trajectory",
    "UnknownModelError",
    "VectorField",
    "averaged_iterated_integral",
    "averaged_system",
    "build",
    "candidate_from_direction",
    "christoffel",
    "christoffel_cache",
    "convergence_study",
    "covariant_derivative",
    "damping_lift",
    "decoupling_residual",
    "dynamics_rhs",
    "fast_parts",
    "find_decoupling_fields",
    "general_averaged_forcing",
    "geodesic_spray",
    "homogeneity_error",
    "kinematic_controllability",
    "kinematic_plan",
    "larc_rank",
    "lexicographic_enumeration",
    "lie_bracket",
    "lift",
    "lifted_lie_bracket",
    "list_models",
    "make",
    "predict_from_rest",
    "psi",
    "quadratic_forms",
    "read_trajectory_csv",
    "reconstruct_inputs",
    "series_terms",
    "simulate",
    "simulate_forced",
    "span_coefficients",
    "symmetric_product",
    "synthesis_audit",
    "synthesize_controls",
    "truncation_errors",
    "worker_count",
]
