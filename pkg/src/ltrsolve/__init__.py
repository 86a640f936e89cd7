"""Regularizing Lanczos trust-region solver for large-scale nonlinear ill-posed least squares."""

__version__ = "0.1.0"

from .exceptions import (
    ContractViolationError,
    DenseCapExceededError,
    EvaluationError,
    InvalidStartError,
    SecularNonConvergenceError,
    SingularSystemError,
    UndefinedMetricError,
    UsageError,
)
from .gklb import Bidiagonalization, ReorthPolicy, factorization_residuals, gklb, tridiagonal_gram
from .krylov_sqrt import SmallSVD, s_tilde, small_svd, sq
from .operator import (
    NoisyData,
    NonlinearProblem,
    add_noise,
    estimate_jacobian_norm,
    gradient,
    objective,
)
from .problems import ParamIdentProblem, build_problem61, build_synthetic
from .rtr import (
    DenseDecomposition,
    compare_metrics,
    decompose_jacobian,
    exact_sqrt_apply,
    exact_trs,
    factorization_defect,
    rtr_solve,
)
from .solver import (
    IterationRecord,
    SolverConfig,
    SolverResult,
    discrepancy_check,
    ell_schedule,
    ltr_solve,
    radius_update,
)
from .trs import (
    KKTSolution,
    SecularConfig,
    cauchy_point,
    model_phi,
    projected_model_norm,
    radius_cap_for_q,
    recover_step,
    secular_newton,
    solve_w,
)

__all__ = [
    "Bidiagonalization",
    "ContractViolationError",
    "DenseCapExceededError",
    "DenseDecomposition",
    "EvaluationError",
    "InvalidStartError",
    "IterationRecord",
    "KKTSolution",
    "NoisyData",
    "NonlinearProblem",
    "ParamIdentProblem",
    "ReorthPolicy",
    "SecularConfig",
    "SecularNonConvergenceError",
    "SingularSystemError",
    "SmallSVD",
    "SolverConfig",
    "SolverResult",
    "UndefinedMetricError",
    "UsageError",
    "add_noise",
    "build_problem61",
    "build_synthetic",
    "cauchy_point",
    "compare_metrics",
    "decompose_jacobian",
    "discrepancy_check",
    "ell_schedule",
    "estimate_jacobian_norm",
    "exact_sqrt_apply",
    "exact_trs",
    "factorization_defect",
    "factorization_residuals",
    "gklb",
    "gradient",
    "ltr_solve",
    "model_phi",
    "objective",
    "projected_model_norm",
    "radius_cap_for_q",
    "radius_update",
    "recover_step",
    "rtr_solve",
    "s_tilde",
    "secular_newton",
    "small_svd",
    "solve_w",
    "sq",
    "tridiagonal_gram",
]
