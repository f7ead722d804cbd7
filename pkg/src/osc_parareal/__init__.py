"""Parallel-in-time integration of highly oscillatory ODEs.

The coarse propagator combines a filtered Poincare-map force estimator
with trajectory phase alignment so that parareal iteration counts stay
bounded as the fast frequency grows.
"""

__version__ = "0.1.0"

from .errors import (
    OscPararealError,
    ConfigurationError,
    CatalogError,
    BlowUpError,
    StiffnessError,
    UnsupportedMethodError,
    UnsupportedDiagnosticError,
    AlignmentFailureError,
    SolverAbortError,
)
from .kernels import (
    FilterKernel,
    make_kernel,
    make_constant_kernel,
    eval_kernel,
    moment_integral,
)
from .ode import (
    OdeProblem,
    SlowObservables,
    VerletSplit,
    FlowMap,
    StepCounter,
    eval_full_rhs,
    eval_alignment_rhs,
    observe_slow,
)
from .integrators import (
    FineConfig,
    FineFlow,
    propagate_fixed,
    propagate_adaptive,
    propagate_verlet,
    propagate_filtered,
    record_trajectory,
)
from .alignment import (
    AlignmentConfig,
    AlignmentResult,
    scan_first_minima,
    local_align,
    forward_align_basic,
    forward_align_improved,
)
from .poincare import (
    PoincareConfig,
    PoincareFlow,
    force_fe_chord,
    force_z_symmetric,
    symmetric_samples,
    poincare_step,
    poincare_propagate,
)
from .parareal import (
    PararealConfig,
    PararealRun,
    run_naive,
    run_slow,
    run_full,
    effective_segment,
    speedup_estimate,
)
from .metrics import (
    ErrorSeries,
    state_sup_error,
    slow_sup_error,
    iterations_to_tolerance,
    fit_order,
)
from .problems import (
    BenchmarkSpec,
    LinearSpiralCoarse,
    make_problem,
    catalog_names,
    reference_trajectory,
    fpu_energy,
)
from .config import ExperimentConfig, from_json, from_file, apply_overrides
from .runners import (
    ExperimentResult,
    resolve_experiment,
    run_experiment,
    sweep_experiment,
    forward_alignment_error,
    estimator_phase_gap,
)

__all__ = [
    "OscPararealError", "ConfigurationError", "CatalogError", "BlowUpError",
    "StiffnessError", "UnsupportedMethodError", "UnsupportedDiagnosticError",
    "AlignmentFailureError", "SolverAbortError",
    "FilterKernel", "make_kernel", "make_constant_kernel", "eval_kernel",
    "moment_integral",
    "OdeProblem", "SlowObservables", "VerletSplit", "FlowMap", "StepCounter",
    "eval_full_rhs", "eval_alignment_rhs", "observe_slow",
    "FineConfig", "FineFlow", "propagate_fixed", "propagate_adaptive",
    "propagate_verlet", "propagate_filtered", "record_trajectory",
    "AlignmentConfig", "AlignmentResult", "scan_first_minima", "local_align",
    "forward_align_basic", "forward_align_improved",
    "PoincareConfig", "PoincareFlow", "force_fe_chord", "force_z_symmetric",
    "symmetric_samples", "poincare_step", "poincare_propagate",
    "PararealConfig", "PararealRun", "run_naive", "run_slow", "run_full",
    "effective_segment", "speedup_estimate",
    "ErrorSeries", "state_sup_error", "slow_sup_error",
    "iterations_to_tolerance", "fit_order",
    "BenchmarkSpec", "LinearSpiralCoarse", "make_problem", "catalog_names",
    "reference_trajectory", "fpu_energy",
    "ExperimentConfig", "from_json", "from_file", "apply_overrides",
    "ExperimentResult", "resolve_experiment", "run_experiment",
    "sweep_experiment", "forward_alignment_error", "estimator_phase_gap",
]
