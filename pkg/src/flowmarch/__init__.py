"""Learned flow-map time integrators for ODE initial value problems.

Train a small randomized network to represent the local flow map
psi(y0, t0, xi) of a system dy/dt = f(y, t), then march trajectories by
iterating the trained map at fixed or per-sub-domain step sizes.
"""

from .bench import (
    ExperimentConfig,
    FlowTheoremReport,
    ResultRow,
    TheoremCheck,
    canon_method,
    load_experiment_config,
    march_config_from_run_config,
    model_from_run_config,
    run_experiment,
    verify_flow_theorems,
)
from .catalog import (
    CatalogEntry,
    KindDefaults,
    PROBLEM_IDS,
    assemble_model,
    build_default_model,
    exact_linear_solution,
    get_entry,
    get_system,
)
from .configio import (
    dump_toml,
    load_run_config,
    load_toml,
    run_config_from_entry,
    validate_run_config,
)
from .decomp import (
    DecomposedModel,
    Partition,
    Subdomain,
    build_decomposed,
    build_partition,
    enlarge,
    locate,
)
from .errors import (
    ConfigError,
    FlowmarchError,
    LinearSolverError,
    ModelFormatError,
    NumericError,
    OutOfDomainError,
    StageSolverError,
    StiffnessError,
)
from .fasteval import cached_evaluator, compile_evaluator
from .marcher import MarchConfig, StepRecord, march, march_quasi_adaptive, step, step_periodic
from .modelio import load_model, model_manifest, save_model
from .odecore import (
    ErrorReport,
    IvpSystem,
    Trajectory,
    TrainingDomain,
    check_system,
    error_metrics,
)
from .psirep import (
    KINDS,
    CollocationSet,
    PsiModel,
    PsiRepresentation,
    assemble_jacobian,
    assemble_residual,
    build_model,
    canon_kind,
    eval_psi,
)
from .randnet import Normalizer, SubnetParams, init_subnet, make_rng
from .refsolve import (
    Tolerances,
    dp54_adaptive,
    newton_root,
    reference_trajectory,
    rk4_fixed,
    sdirk2_adaptive,
)
from .trainer import (
    TrainConfig,
    TrainReport,
    gauss_newton,
    nllsq_perturb,
    sample_collocation,
    train_decomposed,
    train_model,
)

__version__ = "0.1.0"

__all__ = [
    "CatalogEntry",
    "CollocationSet",
    "ConfigError",
    "DecomposedModel",
    "ErrorReport",
    "ExperimentConfig",
    "FlowTheoremReport",
    "FlowmarchError",
    "IvpSystem",
    "KINDS",
    "KindDefaults",
    "LinearSolverError",
    "MarchConfig",
    "ModelFormatError",
    "Normalizer",
    "NumericError",
    "OutOfDomainError",
    "PROBLEM_IDS",
    "Partition",
    "PsiModel",
    "PsiRepresentation",
    "ResultRow",
    "StageSolverError",
    "StepRecord",
    "StiffnessError",
    "Subdomain",
    "SubnetParams",
    "TheoremCheck",
    "Tolerances",
    "TrainConfig",
    "TrainReport",
    "TrainingDomain",
    "Trajectory",
    "assemble_jacobian",
    "assemble_model",
    "assemble_residual",
    "build_decomposed",
    "build_default_model",
    "build_model",
    "build_partition",
    "cached_evaluator",
    "canon_kind",
    "canon_method",
    "check_system",
    "compile_evaluator",
    "dp54_adaptive",
    "dump_toml",
    "enlarge",
    "error_metrics",
    "eval_psi",
    "exact_linear_solution",
    "gauss_newton",
    "get_entry",
    "get_system",
    "init_subnet",
    "load_experiment_config",
    "load_model",
    "load_run_config",
    "load_toml",
    "locate",
    "make_rng",
    "march",
    "march_config_from_run_config",
    "march_quasi_adaptive",
    "model_from_run_config",
    "model_manifest",
    "newton_root",
    "nllsq_perturb",
    "reference_trajectory",
    "rk4_fixed",
    "run_config_from_entry",
    "run_experiment",
    "sample_collocation",
    "save_model",
    "sdirk2_adaptive",
    "step",
    "step_periodic",
    "train_decomposed",
    "train_model",
    "validate_run_config",
    "verify_flow_theorems",
]
