"""Concrete test problems.

``build_problem61`` assembles the 2D elliptic parameter-identification
problem: recover the zeroth-order coefficient c in a discretized
``-laplace(u) + c u = phi`` from observations of u.  The forward map is
``F(c) = (A + diag(c))^{-1} phi_bar`` with A the 5-point Dirichlet Laplacian
on an N x N grid (lexicographic ordering); its Jacobian is
``J(c) = -(A + diag(c))^{-1} diag(F(c))``.  One sparse factorization of
``A + diag(c)`` is cached per iterate and serves the forward map and all
Jacobian products there.

``build_synthetic`` is a tiny separable map with a prescribed singular-value
decay, used for oracle and property tests.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import ContractViolationError, EvaluationError
from .operator import (NoisyData, NonlinearProblem, add_noise,
                       estimate_jacobian_norm)

Array = np.ndarray

_DENSE_HOOK_CAP = 3000


def coefficient_field(x, y):
    """The identified coefficient: oscillation plus a centered paraboloid."""
    return (1.5 * np.sin(4 * np.pi * x) * np.sin(6 * np.pi * y)
            + 3.0 * ((x - 0.5) ** 2 + (y - 0.5) ** 2) + 2.0)


def state_field(x, y):
    """The observed state; equals 1 on the boundary and vanishes at the center."""
    return 16.0 * x * (1.0 - x) * y * (y - 1.0) + 1.0


def dirichlet_laplacian(N: int) -> sp.csc_matrix:
    """5-point Dirichlet Laplacian on the N x N grid with spacing 1/(N-1)."""
    h = 1.0 / (N - 1)
    t = sp.diags([-np.ones(N - 1), 2.0 * np.ones(N), -np.ones(N - 1)],
                 [-1, 0, 1]) / h**2
    eye = sp.identity(N)
    return (sp.kron(eye, t) + sp.kron(t, eye)).tocsc()


@dataclass
class ParamIdentProblem:
    """Assembled discrete problem plus data making c_true a nonzero-residual optimum.

    ``u0`` is the exact discrete state (``F(c_true) = u0`` holds by
    construction of ``phi_bar``); ``u_bar`` is the observation perturbed by a
    residual of norm ``residual_target``.  In ``residual_mode="tail"`` the
    residual direction is taken as orthogonal to the Jacobian range as the
    spectrum permits, which makes c_true stationary to the documented
    ``stationarity_abs`` / ``stationarity_rel``: machine-small exactly when
    the grid contains a zero of the state (odd N), floored at one over the
    Jacobian condition number otherwise.  In ``residual_mode="random"`` the
    direction is an unprojected seeded Gaussian draw; c_true is then only
    loosely stationary, but part of the residual is fittable, which is what
    reproduces the published full-scale residual levels.
    """

    N: int
    residual_target: float
    seed: int
    A: sp.csc_matrix
    phi_bar: Array
    u0: Array
    u_bar: Array
    c_true: Array
    residual_mode: str = "tail"
    stationarity_abs: float = 0.0
    stationarity_rel: float = 0.0
    jac_norm_est: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def n(self) -> int:
        return self.N * self.N

    def default_start(self) -> Array:
        """Reference start: c_true plus a smooth bump of norm 0.05 sqrt(n).

        The method is a local regularization scheme; starts incorporate
        a-priori closeness to the sought coefficient, at the same
        per-component distance the published error curves begin from.
        """
        xs = np.linspace(0.0, 1.0, self.N)
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        bump = (np.sin(np.pi * X) * np.sin(np.pi * Y)).ravel()
        return self.c_true + 0.05 * np.sqrt(self.n) * bump / np.linalg.norm(bump)

    # -- cached sparse factorization ------------------------------------

    def _factorized(self, c: Array):
        """(LU of A + diag(c), F(c)); one factorization per distinct iterate."""
        key = c.tobytes()
        with self._lock:
            hit = self._cache.get("slot")
            if hit is not None and hit[0] == key:
                return hit[1], hit[2]
        if not np.all(np.isfinite(c)):
            raise EvaluationError("coefficient contains non-finite entries")
        try:
            lu = spla.splu((self.A + sp.diags(c)).tocsc())
            Fc = lu.solve(self.phi_bar)
        except RuntimeError as exc:  # singular shifted system
            raise EvaluationError(f"inner solve failed: {exc}") from exc
        if not np.all(np.isfinite(Fc)):
            raise EvaluationError("inner solve produced non-finite values")
        with self._lock:
            self._cache["slot"] = (key, lu, Fc)
        return lu, Fc

    # -- forward map and Jacobian products ------------------------------

    def eval_F(self, c: Array) -> Array:
        _, Fc = self._factorized(np.asarray(c, dtype=float))
        return Fc.copy()

    def jac_apply(self, c: Array, v: Array) -> Array:
        lu, Fc = self._factorized(np.asarray(c, dtype=float))
        return -lu.solve(Fc * v)

    def jac_transpose_apply(self, c: Array, u: Array) -> Array:
        # A + diag(c) is symmetric, so the transpose reuses the factorization
        lu, Fc = self._factorized(np.asarray(c, dtype=float))
        return -Fc * lu.solve(u)

    def jac_dense(self, c: Array) -> Array:
        lu, Fc = self._factorized(np.asarray(c, dtype=float))
        return -lu.solve(np.diag(Fc))

    def operator(self) -> NonlinearProblem:
        """The matrix-free interface consumed by the solvers."""
        dense = self.jac_dense if self.n <= _DENSE_HOOK_CAP else None
        return NonlinearProblem(
            n=self.n, m=self.n,
            eval=self.eval_F,
            jac_apply=self.jac_apply,
            jac_transpose_apply=self.jac_transpose_apply,
            known_solution=self.c_true.copy(),
            jac_dense=dense,
            name=f"param_ident(N={self.N})",
        )

    def exact_data(self) -> Array:
        return self.u_bar.copy()

    def noisy_data(self, delta: float, seed: int) -> NoisyData:
        return add_noise(self.u_bar, delta, seed)


def _stationary_residual_direction(prob: ParamIdentProblem,
                                   rng: np.random.Generator) -> Array:
    """Unit vector r minimizing ||J^T r|| at c_true.

    When the state vanishes somewhere on the grid the Jacobian is singular
    and ``r = (A + diag(c)) z`` with z supported on the zero set satisfies
    J^T r = 0 exactly.  Otherwise the best attainable direction is the left
    singular vector of the smallest singular value, found by inverse power
    iteration with the explicit inverse J^{-1} = -diag(1/u0) (A + diag(c)).
    """
    M = (prob.A + sp.diags(prob.c_true)).tocsc()
    u0 = prob.u0
    zero = np.abs(u0) <= 1e-12 * np.max(np.abs(u0))
    if np.any(zero):
        z = np.zeros(prob.n)
        z[zero] = rng.standard_normal(int(np.sum(zero)))
        r = M @ z
    else:
        # power iteration on J^{-T} J^{-1} = U diag(s)^{-2} U^T
        r = rng.standard_normal(prob.n)
        r /= np.linalg.norm(r)
        prev = np.inf
        for _ in range(5000):
            t = M @ ((M @ r) / u0**2)
            ray = float(np.linalg.norm(t))
            r = t / ray
            if abs(ray - prev) <= 1e-15 * ray:
                break
            prev = ray
    return r / np.linalg.norm(r)


def build_problem61(N: int, residual_target: float = 0.1, seed: int = 0,
                    residual_mode: str = "tail") -> ParamIdentProblem:
    """Assemble the parameter-identification problem on an N x N grid.

    The source term is defined discretely, ``phi_bar = A u0 + c_true * u0``,
    so that ``F(c_true) = u0`` holds exactly in the discrete model.  The
    observation is ``u_bar = u0 - r`` with ``||r|| = residual_target``; the
    direction of r is controlled by ``residual_mode`` (see
    :class:`ParamIdentProblem`).  The achieved gradient norm at c_true is
    measured and stored on the returned object.
    """
    if N < 3:
        raise ContractViolationError(f"grid requires N >= 3, got {N}")
    if residual_target <= 0:
        raise ContractViolationError("residual_target must be positive")
    if residual_mode not in ("tail", "random"):
        raise ContractViolationError(f"unknown residual_mode {residual_mode!r}")
    xs = np.linspace(0.0, 1.0, N)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    c_true = coefficient_field(X, Y).ravel()
    u0 = state_field(X, Y).ravel()
    A = dirichlet_laplacian(N)
    phi_bar = A @ u0 + c_true * u0

    prob = ParamIdentProblem(
        N=N, residual_target=float(residual_target), seed=seed,
        A=A, phi_bar=phi_bar, u0=u0, u_bar=u0.copy(), c_true=c_true,
        residual_mode=residual_mode)

    rng = np.random.default_rng(seed)
    if residual_mode == "tail":
        direction = _stationary_residual_direction(prob, rng)
    else:
        direction = rng.standard_normal(prob.n)
        direction /= np.linalg.norm(direction)
    prob.u_bar = u0 - residual_target * direction

    g = prob.jac_transpose_apply(c_true, residual_target * direction)
    prob.stationarity_abs = float(np.linalg.norm(g))
    prob.jac_norm_est = estimate_jacobian_norm(prob.operator(), c_true, seed=seed)
    prob.stationarity_rel = prob.stationarity_abs / (
        prob.jac_norm_est * residual_target)
    return prob


def build_synthetic(n: int, spectrum_decay: float = 0.85,
                    nonlinearity_scale: float = 0.1,
                    seed: int = 0) -> NonlinearProblem:
    """Separable map F_i(x) = s_i x_i + eps x_i^2 with s_i = decay^i.

    The Jacobian is diag(s_i + 2 eps x_i); the condition number at the origin
    is decay^(1-n).  A reference solution is drawn from the seeded generator
    and stored as ``known_solution``.
    """
    if n < 2:
        raise ContractViolationError(f"synthetic problem requires n >= 2, got {n}")
    if not 0 < spectrum_decay <= 1:
        raise ContractViolationError("spectrum_decay must lie in (0, 1]")
    s = spectrum_decay ** np.arange(1, n + 1)
    eps = float(nonlinearity_scale)
    rng = np.random.default_rng(seed)
    x_true = rng.uniform(0.5, 1.5, n)

    def eval_F(x):
        return s * x + eps * x**2

    def jac_apply(x, v):
        return (s + 2.0 * eps * x) * v

    def jac_transpose_apply(x, u):
        return (s + 2.0 * eps * x) * u

    def jac_dense(x):
        return np.diag(s + 2.0 * eps * x)

    return NonlinearProblem(
        n=n, m=n,
        eval=eval_F,
        jac_apply=jac_apply,
        jac_transpose_apply=jac_transpose_apply,
        known_solution=x_true,
        jac_dense=jac_dense if n <= _DENSE_HOOK_CAP else None,
        name=f"synthetic(n={n})",
    )
