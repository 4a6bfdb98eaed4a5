"""Event-driven sticky particles and entropy certificates for a
nonlocal second-order traffic model.

The package is organised around five layers:

* :mod:`narz.kernels` -- interaction kernels omega and their
  derivatives phi, built-in families, admissibility checks;
* :mod:`narz.dynamics` -- the event-driven particle integrator with
  barycentric merges and conserved per-particle invariants;
* :mod:`narz.cumulative` -- cumulative representations, the limiting
  flux, Rankine-Hugoniot / Oleinik / Kruzkov certificates;
* :mod:`narz.discretize` -- continuum initial data to particles and
  back, quantile atomization and flux construction;
* :mod:`narz.metrics` -- L1 / Wasserstein distances, convergence
  studies and stability bounds.

``narz.cli`` exposes the same pipelines as the ``narz`` console
command.
"""

from .bumps import Bump, TestFunction
from .cumulative import (
    AtomicMeasurePair,
    CertificateRow,
    KruzkovPair,
    PiecewiseLinearFlux,
    StepFunction,
    build_measure_pair,
    certify_state,
    check_oleinik,
    check_rankine_hugoniot,
    convolved_density,
    cumulative_from_particles,
    entropy_residual,
    flux_of_cumulative,
    moment,
)
from .discretize import (
    InitialDatum,
    VelocityProfile,
    atomize,
    build_flux_from_data,
    convolved_initial_density,
    flux_interpolation_error,
    flux_on_grid,
    particles_from_data,
    pseudo_inverse,
    psi_initial,
    recover_initial_velocities,
)
from .dynamics import (
    BoundsReport,
    Event,
    ParticleSystem,
    Tolerances,
    Trajectory,
    TrajectoryRecord,
    a_priori_bounds,
    acceleration,
    compute_psi,
    merge_clusters,
    simulate,
    step_to_next_event,
)
from .errors import (
    BadMassRule,
    GridMismatch,
    InsufficientSnapshots,
    NarzError,
    NonAdjacentMerge,
    NonpositiveSupport,
    ParseError,
    QuadratureFailure,
    ScenarioError,
    StepSizeUnderflow,
    UnknownFamily,
    ValidationError,
)
from .fastsum import kernel_sums, pairwise_sums
from .kernels import (
    BUILTIN_FAMILIES,
    HypothesisReport,
    Kernel,
    eval_panels,
    make_builtin,
    panel_antiderivative,
    validate_hypotheses,
)
from .metrics import (
    ConvergenceRow,
    ConvergenceTable,
    StabilityBounds,
    StabilityInputs,
    StabilityReport,
    StabilityRow,
    convergence_study,
    l1_distance,
    l1_distance_to_initial,
    stability_bounds,
    stability_experiment,
    time_modulus_check,
    wasserstein1,
)
from .scenario import (
    CertificateThresholds,
    Scenario,
    parse_scenario,
    resolve_particles,
    scenario_from_dict,
)

__version__ = "0.1.0"

__all__ = [
    "AtomicMeasurePair",
    "BUILTIN_FAMILIES",
    "BadMassRule",
    "BoundsReport",
    "Bump",
    "CertificateRow",
    "CertificateThresholds",
    "ConvergenceRow",
    "ConvergenceTable",
    "Event",
    "GridMismatch",
    "HypothesisReport",
    "InitialDatum",
    "InsufficientSnapshots",
    "Kernel",
    "KruzkovPair",
    "NarzError",
    "NonAdjacentMerge",
    "NonpositiveSupport",
    "ParseError",
    "ParticleSystem",
    "PiecewiseLinearFlux",
    "QuadratureFailure",
    "Scenario",
    "ScenarioError",
    "StabilityBounds",
    "StabilityInputs",
    "StabilityReport",
    "StabilityRow",
    "StepFunction",
    "StepSizeUnderflow",
    "TestFunction",
    "Tolerances",
    "Trajectory",
    "TrajectoryRecord",
    "UnknownFamily",
    "ValidationError",
    "VelocityProfile",
    "a_priori_bounds",
    "acceleration",
    "atomize",
    "build_flux_from_data",
    "build_measure_pair",
    "certify_state",
    "check_oleinik",
    "check_rankine_hugoniot",
    "compute_psi",
    "convergence_study",
    "convolved_density",
    "convolved_initial_density",
    "cumulative_from_particles",
    "entropy_residual",
    "eval_panels",
    "flux_interpolation_error",
    "flux_of_cumulative",
    "flux_on_grid",
    "kernel_sums",
    "l1_distance",
    "l1_distance_to_initial",
    "make_builtin",
    "merge_clusters",
    "moment",
    "pairwise_sums",
    "panel_antiderivative",
    "parse_scenario",
    "particles_from_data",
    "pseudo_inverse",
    "psi_initial",
    "recover_initial_velocities",
    "resolve_particles",
    "scenario_from_dict",
    "simulate",
    "stability_bounds",
    "stability_experiment",
    "step_to_next_event",
    "time_modulus_check",
    "validate_hypotheses",
    "wasserstein1",
]
