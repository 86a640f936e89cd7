"""Matrix-free interface to nonlinear least-squares problems and the noisy-data model.

Every solver in this package consumes problems only through
:class:`NonlinearProblem`: a nonlinear map ``F`` together with Jacobian-vector
and transposed-Jacobian-vector products.  The Jacobian is never materialized
on the large-scale path; small problems may additionally provide a
``jac_dense`` hook for the dense oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .exceptions import ContractViolationError

Array = np.ndarray


@dataclass(frozen=True)
class NonlinearProblem:
    """A continuously differentiable map F: R^n -> R^m with m >= n.

    Parameters
    ----------
    n, m : int
        Input and output dimensions.
    eval : callable
        ``x -> F(x)``.
    jac_apply : callable
        ``(x, v) -> J(x) v``.
    jac_transpose_apply : callable
        ``(x, u) -> J(x)^T u``.  Must be the exact adjoint of ``jac_apply``.
    known_solution : array, optional
        A reference solution, used for error reporting only.
    domain_guard : callable, optional
        Predicate ``x -> bool``; ``None`` means all of R^n is admissible.
    jac_dense : callable, optional
        ``x -> J(x)`` as an (m, n) array.  Provided only by small problems;
        required by the dense oracle.
    """

    n: int
    m: int
    eval: Callable[[Array], Array]
    jac_apply: Callable[[Array, Array], Array]
    jac_transpose_apply: Callable[[Array, Array], Array]
    known_solution: Optional[Array] = None
    domain_guard: Optional[Callable[[Array], bool]] = None
    jac_dense: Optional[Callable[[Array], Array]] = None
    name: str = ""

    def __post_init__(self):
        if self.n < 1 or self.m < self.n:
            raise ContractViolationError(
                f"need m >= n >= 1, got n={self.n}, m={self.m}")

    def admissible(self, x: Array) -> bool:
        if self.domain_guard is None:
            return True
        return bool(self.domain_guard(x))


@dataclass(frozen=True)
class NoisyData:
    """Observed data ``y_delta`` with noise level ``delta`` (>= 0)."""

    y_delta: Array
    delta: float
    y_exact: Optional[Array] = None

    def __post_init__(self):
        if self.delta < 0:
            raise ContractViolationError(f"noise level must be >= 0, got {self.delta}")
        if self.y_exact is not None:
            gap = float(np.linalg.norm(self.y_exact - self.y_delta))
            if abs(gap - self.delta) > 1e-12 * max(self.delta, 1e-300):
                raise ContractViolationError(
                    f"||y_exact - y_delta|| = {gap} does not match delta = {self.delta}")


def _check_point(problem: NonlinearProblem, x: Array) -> Array:
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n,):
        raise ContractViolationError(
            f"point has shape {x.shape}, expected ({problem.n},)")
    if not problem.admissible(x):
        raise ContractViolationError("point is outside the problem domain")
    return x


def _check_data(problem: NonlinearProblem, data: NoisyData) -> None:
    if data.y_delta.shape != (problem.m,):
        raise ContractViolationError(
            f"data has shape {data.y_delta.shape}, expected ({problem.m},)")


def objective(problem: NonlinearProblem, x: Array, data: NoisyData) -> float:
    """Value of 0.5 * ||F(x) - y_delta||^2."""
    x = _check_point(problem, x)
    _check_data(problem, data)
    r = problem.eval(x) - data.y_delta
    return 0.5 * float(r @ r)


def gradient(problem: NonlinearProblem, x: Array, data: NoisyData) -> Array:
    """Gradient J(x)^T (F(x) - y_delta) of the half-squared residual."""
    x = _check_point(problem, x)
    _check_data(problem, data)
    r = problem.eval(x) - data.y_delta
    return problem.jac_transpose_apply(x, r)


def add_noise(y: Array, delta: float, seed: int) -> NoisyData:
    """Perturb ``y`` by a Gaussian draw rescaled to have norm exactly ``delta``.

    Deterministic for a fixed seed; ``delta = 0`` returns ``y`` unchanged.
    """
    if delta < 0:
        raise ContractViolationError(f"noise level must be >= 0, got {delta}")
    y = np.asarray(y, dtype=float)
    if delta == 0:
        return NoisyData(y_delta=y.copy(), delta=0.0, y_exact=y.copy())
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(y.shape[0])
    e *= delta / np.linalg.norm(e)
    return NoisyData(y_delta=y + e, delta=float(delta), y_exact=y.copy())


def estimate_jacobian_norm(problem: NonlinearProblem, x: Array,
                           iters: int = 12, seed: int = 0) -> float:
    """Largest singular value of J(x), estimated by power iteration on J^T J."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(problem.n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = problem.jac_transpose_apply(x, problem.jac_apply(x, v))
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        est = np.sqrt(nw)
        v = w / nw
    return float(est)


def adjointness_defect(problem: NonlinearProblem, x: Array,
                       trials: int = 100, seed: int = 0) -> float:
    """Largest scaled defect |<Jv,u> - <v,J^T u>| / (||v|| ||u|| ||J||) over random pairs."""
    rng = np.random.default_rng(seed)
    jnorm = estimate_jacobian_norm(problem, x, seed=seed)
    if jnorm == 0:
        return 0.0
    worst = 0.0
    for _ in range(trials):
        v = rng.standard_normal(problem.n)
        u = rng.standard_normal(problem.m)
        lhs = float(problem.jac_apply(x, v) @ u)
        rhs = float(v @ problem.jac_transpose_apply(x, u))
        worst = max(worst, abs(lhs - rhs) /
                    (np.linalg.norm(v) * np.linalg.norm(u) * jnorm))
    return worst


def directional_derivative_defect(problem: NonlinearProblem, x: Array, v: Array,
                                  data: NoisyData, h: float) -> float:
    """|forward difference of the objective along v minus g^T v| at step h."""
    f0 = objective(problem, x, data)
    f1 = objective(problem, x + h * v, data)
    g = gradient(problem, x, data)
    return abs((f1 - f0) / h - float(g @ v))
