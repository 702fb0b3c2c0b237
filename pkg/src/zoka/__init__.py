"""Zeroth-order composite convex optimization with variance reduction.

Solves min_x f(x) + psi(x) given only a function-value oracle for the
smooth part f: finite-difference gradient estimators (single directions,
coordinate or sphere mini-batches, and a full coordinate sweep), closed-form
proximal operators for the supported psi, an accelerated variance-reduced
solver with preset parameter derivations, reference baselines, and a
benchmark harness with seeded multi-trial experiments.
"""

from .problems import (
    LogisticDataset,
    LogisticLoss,
    OracleError,
    OracleProblem,
    PsiSpec,
    QuadraticFunction,
    load_dataset_csv,
    make_logistic_problem,
    make_quadratic_problem,
    save_dataset_csv,
    solve_reference,
    synthesize_dataset,
)
from .estimators import (
    DirectionBatch,
    GradientEstimate,
    SamplingOption,
    full_estimate,
    minibatch_estimate,
    sample_batch,
    sample_coordinate_batch,
    sample_sphere_batch,
    two_point,
    vr_gradient,
)
from .prox import katyusha_z_step, project_feasible, prox
from .bench import (
    ExperimentConfig,
    ProblemSpec,
    SolverSpec,
    build_benchmark_problem,
    build_problem,
    parse_config,
    run_experiment,
)
from .solvers import (
    Budget,
    Instrumentation,
    KatyushaParams,
    LyapunovReport,
    PresetKind,
    SolverState,
    StepRecord,
    TrialTrace,
    init_state,
    katyusha_step,
    lyapunov,
    preset,
    run_katyusha,
    run_naive_accel,
    run_projected_zo_gd,
    run_zo_svrg,
    smoothing_radius,
    variance_constant,
)

__version__ = "0.1.0"

__all__ = [
    "LogisticDataset", "LogisticLoss", "OracleError", "OracleProblem",
    "PsiSpec", "QuadraticFunction", "load_dataset_csv",
    "make_logistic_problem", "make_quadratic_problem", "save_dataset_csv",
    "solve_reference", "synthesize_dataset",
    "DirectionBatch", "GradientEstimate", "SamplingOption", "full_estimate",
    "minibatch_estimate", "sample_batch", "sample_coordinate_batch",
    "sample_sphere_batch", "two_point", "vr_gradient",
    "katyusha_z_step", "project_feasible", "prox",
    "ExperimentConfig", "ProblemSpec", "SolverSpec",
    "build_benchmark_problem", "build_problem", "parse_config",
    "run_experiment",
    "Budget", "Instrumentation", "KatyushaParams", "LyapunovReport",
    "PresetKind", "SolverState", "StepRecord", "TrialTrace", "init_state",
    "katyusha_step", "lyapunov", "preset", "run_katyusha", "run_naive_accel",
    "run_projected_zo_gd", "run_zo_svrg", "smoothing_radius",
    "variance_constant",
]
