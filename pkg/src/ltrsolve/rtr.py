"""Exact trust-region oracle built on dense SVDs of the Jacobian.

Desk-scale ground truth for the Lanczos path: applies the true square root
of J^T J, solves the full (non-projected) subproblem through the same
secular machinery, and provides the comparison metrics between the inexact
and exact square-rooted gradients and steps.  Refuses problems above its
size cap rather than silently degrading.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DenseCapExceededError, UndefinedMetricError
from .gklb import Bidiagonalization, tridiagonal_gram
from .krylov_sqrt import SmallSVD, s_tilde, small_svd
from .operator import NoisyData, NonlinearProblem
from .solver import SolverConfig, SolverResult, _run_trust_region, _SpectralState
from .trs import SecularConfig, recover_step, secular_newton, secular_solve

Array = np.ndarray

DENSE_CAP_DEFAULT = 3000


@dataclass(frozen=True)
class DenseDecomposition:
    """Economy SVD of a dense Jacobian, J = U diag(s) V^T."""

    U: Array
    s: Array
    Vt: Array

    @property
    def n(self) -> int:
        return self.Vt.shape[1]


def decompose_jacobian(problem: NonlinearProblem, x: Array,
                       dense_cap: int = DENSE_CAP_DEFAULT) -> DenseDecomposition:
    """Dense SVD of J(x) through the problem's materialization hook."""
    if problem.jac_dense is None:
        raise DenseCapExceededError(
            "problem provides no dense Jacobian hook; the dense oracle "
            "requires one")
    if problem.n > dense_cap:
        raise DenseCapExceededError(
            f"problem dimension {problem.n} exceeds the dense cap {dense_cap}")
    J = np.asarray(problem.jac_dense(x), dtype=float)
    U, s, Vt = np.linalg.svd(J, full_matrices=False)
    return DenseDecomposition(U=U, s=s, Vt=Vt)


def exact_sqrt_apply(dec: DenseDecomposition, b: Array) -> Array:
    """(J^T J)^{1/2} b = V diag(s) V^T b."""
    return dec.Vt.T @ (dec.s * (dec.Vt @ b))


@dataclass(frozen=True)
class ExactTRSolution:
    z: Array
    lam: float
    p: Array
    active: bool
    newton_iters: int


def exact_trs(dec: DenseDecomposition, g: Array, Delta: float,
              cfg: SecularConfig | None = None) -> ExactTRSolution:
    """Solve the full elliptical subproblem: (B^2 + lam I) z = -B^{1/2} g, then p = B^{1/2} z."""
    sig = dec.s**2
    rcoef = dec.Vt @ g
    w_hat, lam, active, iters, _ = secular_solve(sig, rcoef, Delta, cfg)
    z = dec.Vt.T @ w_hat
    p = dec.Vt.T @ (dec.s * w_hat)
    return ExactTRSolution(z=z, lam=lam, p=p, active=active, newton_iters=iters)


class _DenseEngine:
    """Per-iterate dense SVD factorization for the shared outer loop."""

    def __init__(self, problem: NonlinearProblem, cfg: SolverConfig,
                 dense_cap: int = DENSE_CAP_DEFAULT):
        self.problem = problem
        self.cfg = cfg
        self.dense_cap = dense_cap

    def factorize(self, x, g, gnorm, k) -> _SpectralState:
        dec = decompose_jacobian(self.problem, x, self.dense_cap)
        sig = dec.s**2
        rcoef = dec.Vt @ g
        Vt, s = dec.Vt, dec.s

        def step_from_eig(w_hat, _Vt=Vt, _s=s):
            return _Vt.T @ (_s * w_hat)

        return _SpectralState(
            sig=sig,
            rcoef=rcoef,
            snorm=float(np.linalg.norm(s * rcoef)),
            jnorm_est=float(s[0]),
            rank_one_norm=0.0,
            step_from_eig=step_from_eig,
            payload=dec,
        )


def rtr_solve(problem: NonlinearProblem, data: NoisyData, x0: Array,
              cfg: SolverConfig | None = None, sink=None, probe=None,
              dense_cap: int = DENSE_CAP_DEFAULT) -> SolverResult:
    """Exact counterpart of the Lanczos solver, one dense SVD per iteration.

    Shares the outer loop, radius heuristic and stopping rules with
    ``ltr_solve``; only the per-iterate factorization differs.  The Jacobian
    norm entering the discrepancy check is the true largest singular value.
    """
    cfg = cfg or SolverConfig()
    return _run_trust_region(_DenseEngine(problem, cfg, dense_cap), problem,
                             data, x0, cfg, sink=sink, probe=probe)


def compare_metrics(dec: DenseDecomposition, bid: Bidiagonalization, g: Array,
                    Delta: float, cfg: SecularConfig | None = None,
                    tsvd: SmallSVD | None = None) -> dict:
    """Relative errors of the Lanczos square-rooted gradient and step.

    Both sides are evaluated at the same point and radius: ``err_r`` compares
    the subspace approximation of B^{1/2} g against the dense one, ``err_p``
    the resulting trust-region steps.
    """
    if tsvd is None:
        tsvd = small_svd(bid.t_matrix())
    root_exact = exact_sqrt_apply(dec, g)
    denom_r = float(np.linalg.norm(root_exact))
    if denom_r == 0.0:
        raise UndefinedMetricError("exact square-rooted gradient vanishes")
    err_r = float(np.linalg.norm(s_tilde(bid, g, tsvd) - root_exact)) / denom_r

    sol = secular_newton(tsvd, float(np.linalg.norm(g)), Delta, cfg)
    _, p_ltr = recover_step(bid, sol.w, tsvd)
    p_exact = exact_trs(dec, g, Delta, cfg).p
    denom_p = float(np.linalg.norm(p_exact))
    if denom_p == 0.0:
        raise UndefinedMetricError("exact trust-region step vanishes")
    err_p = float(np.linalg.norm(p_ltr - p_exact)) / denom_p
    return {"err_r": err_r, "err_p": err_p}


def factorization_defect(bid: Bidiagonalization, B: Array,
                         norm: str = "fro") -> float:
    """|| Q T^T T Q^T - Q Q^T B || for a dense symmetric B = J^T J.

    Because Q has orthonormal columns the defect equals the norm of the
    (ell x n) matrix ``T^T T Q^T - Q^T B``, so neither norm requires forming
    an n x n matrix.
    """
    Q = bid.Q
    M = tridiagonal_gram(bid) @ Q.T - (np.asarray(B) @ Q).T
    if norm == "fro":
        return float(np.linalg.norm(M))
    if norm == "2":
        return float(np.linalg.svd(M, compute_uv=False)[0])
    raise ValueError(f"unknown norm {norm!r}")
