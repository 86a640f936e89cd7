"""Outer regularizing trust-region loop with the adaptive radius heuristic.

One iteration factorizes the Jacobian at the current point (Lanczos for the
large-scale path, dense SVD for the oracle), solves the projected subproblem
for a trial step, and accepts or shrinks the radius based on the ratio of
actual to model decrease.  The radius is a multiple ``mu_k`` of the norm of
the square-rooted gradient; ``mu`` is adapted from the acceptance ratio and
from the projected model-norm ratio ``q_k``, and the run stops on the
gradient-based discrepancy principle when the data are noisy.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .exceptions import ContractViolationError, EvaluationError
from .gklb import ReorthPolicy, gklb
from .krylov_sqrt import small_svd
from .operator import NoisyData, NonlinearProblem, _check_point
from .trs import SecularConfig, secular_solve

Array = np.ndarray

EllMode = Union[int, str, Callable[[int], int]]


@dataclass(frozen=True)
class SolverConfig:
    """Tunables of the outer loop and its radius heuristic.

    ``ell`` selects the Lanczos subspace dimension per iteration: an integer
    (constant), the string ``"adaptive"`` for ``3 + ceil(k/2)``, or a callable
    ``k -> ell_k``.  ``grad_tol`` is the noise-free stopping tolerance; when
    ``None`` it defaults to ``1e-8 * max(1, ||g_0||)``.  With
    ``enforce_radius_cap`` the radius is additionally kept below the bound
    that provably forces the projected model-norm condition ``q_k >= q``.
    """

    q: float = 0.8
    eta: float = 0.1
    gamma: float = 1.0 / 6.0
    mu0: float = 0.1
    nu: float = 1.1
    eta2: float = 0.25
    mu_max: float = 1e5
    delta_max: float = 1e4
    delta_min: float = 1e-12
    tau_bar: float = 0.1
    k_max: int = 500
    ell: EllMode = "adaptive"
    reorth: Optional[ReorthPolicy] = None
    secular: SecularConfig = field(default_factory=SecularConfig)
    grad_tol: Optional[float] = None
    enforce_radius_cap: bool = False

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ContractViolationError("q must lie in (0, 1)")
        if not 0.0 < self.eta < 1.0:
            raise ContractViolationError("eta must lie in (0, 1)")
        if not 0.0 < self.gamma < 1.0:
            raise ContractViolationError("gamma must lie in (0, 1)")
        for name in ("mu0", "nu", "eta2", "mu_max", "delta_max", "delta_min",
                     "tau_bar"):
            if getattr(self, name) <= 0:
                raise ContractViolationError(f"{name} must be positive")
        if self.delta_min >= self.delta_max:
            raise ContractViolationError("delta_min must be below delta_max")
        if self.k_max < 1:
            raise ContractViolationError("k_max must be >= 1")
        if isinstance(self.ell, int) and self.ell < 1:
            raise ContractViolationError("constant ell must be >= 1")
        if isinstance(self.ell, str) and self.ell != "adaptive":
            raise ContractViolationError(f"unknown ell schedule {self.ell!r}")


@dataclass(frozen=True)
class IterationRecord:
    """Telemetry for one outer iteration (field order matches the CSV columns)."""

    k: int
    ell: int
    delta_k: float
    mu_k: float
    lambda_k: float
    g_norm: float
    f: float
    residual: float
    pi: float
    q_k: float
    accepted: bool
    rejects: int
    newton_iters: int
    rank_one_norm: float
    err_truth: float  # NaN when no reference solution is known


CSV_FIELDS = ("k", "ell", "delta_k", "mu_k", "lambda_k", "g_norm", "f",
              "residual", "pi", "q_k", "accepted", "rejects", "newton_iters",
              "rank_one_norm", "err_truth")


@dataclass
class SolverResult:
    x_final: Array
    stop_reason: str  # discrepancy | gradient_tol | k_max | radius_floor
    records: list
    totals: dict


def ell_schedule(k: int, mode: EllMode, n: int) -> int:
    """Subspace dimension for iteration k, capped at the problem dimension."""
    if k < 0:
        raise ContractViolationError("iteration index must be >= 0")
    if callable(mode):
        ell = int(mode(k))
    elif mode == "adaptive":
        ell = 3 + math.ceil(k / 2)
    else:
        ell = int(mode)
    if ell < 1:
        raise ContractViolationError(f"schedule produced ell = {ell}")
    return min(ell, n)


def discrepancy_check(g_norm: float, j_norm_est: float, tau_bar: float,
                      delta: float) -> bool:
    """Gradient-based discrepancy principle: ||g|| <= tau_bar ||J|| delta."""
    if delta < 0:
        raise ContractViolationError("delta must be >= 0")
    return g_norm <= tau_bar * j_norm_est * delta


def radius_update(mu_k: float, q_k: float, pi_k: float, cfg: SolverConfig) -> float:
    """Adapt the radius multiplier from the model-norm ratio and acceptance ratio."""
    if mu_k <= 0:
        raise ContractViolationError("mu must be positive")
    if q_k < cfg.q or pi_k < cfg.eta2:
        mu = mu_k / 6.0
    elif q_k > cfg.nu * cfg.q and pi_k > cfg.eta2:
        mu = 2.0 * mu_k
    else:
        mu = mu_k
    return min(mu, cfg.mu_max)


class _SpectralState:
    """Per-iterate factorization reduced to spectral coordinates.

    ``sig`` holds the (descending) eigenvalues of the projected normal
    operator, ``rcoef`` the gradient coordinates in its eigenbasis; the model,
    the secular equation and the projected model norm are identical functions
    of these pairs for both the Lanczos path and the dense oracle.
    """

    __slots__ = ("sig", "rcoef", "snorm", "jnorm_est", "rank_one_norm",
                 "step_from_eig", "payload")

    def __init__(self, sig, rcoef, snorm, jnorm_est, rank_one_norm,
                 step_from_eig, payload=None):
        self.sig = sig
        self.rcoef = rcoef
        self.snorm = snorm
        self.jnorm_est = jnorm_est
        self.rank_one_norm = rank_one_norm
        self.step_from_eig = step_from_eig
        self.payload = payload


class _LanczosEngine:
    """Factorizes J(x) by partial bidiagonalization started at the gradient."""

    def __init__(self, problem: NonlinearProblem, cfg: SolverConfig):
        self.problem = problem
        self.cfg = cfg

    def factorize(self, x: Array, g: Array, gnorm: float, k: int) -> _SpectralState:
        ell = ell_schedule(k, self.cfg.ell, self.problem.n)
        policy = self.cfg.reorth or ReorthPolicy.default_for(ell)
        bid = gklb(lambda v: self.problem.jac_apply(x, v),
                   lambda u: self.problem.jac_transpose_apply(x, u),
                   g, ell, policy)
        tsvd = small_svd(bid.t_matrix())
        sig = tsvd.s**2
        rcoef = gnorm * tsvd.v_e1
        Q, Vt, s = bid.Q, tsvd.Vt, tsvd.s

        def step_from_eig(w_hat, _Q=Q, _Vt=Vt, _s=s):
            return _Q @ (_Vt.T @ (_s * w_hat))

        return _SpectralState(
            sig=sig,
            rcoef=rcoef,
            snorm=gnorm * float(np.linalg.norm(s * tsvd.v_e1)),
            jnorm_est=float(s[0]),
            rank_one_norm=float((bid.alphas[-1] * bid.beta_last) ** 2),
            step_from_eig=step_from_eig,
            payload=(bid, tsvd),
        )


def _trial_ratio(problem, x_trial, data, f, denom):
    """Acceptance ratio; inadmissible or failing trial points count as rejections."""
    if denom <= 0.0 or not problem.admissible(x_trial):
        return -np.inf, np.nan
    try:
        r = problem.eval(x_trial) - data.y_delta
    except EvaluationError:
        return -np.inf, np.nan
    f_trial = 0.5 * float(r @ r)
    if not np.isfinite(f_trial):
        return -np.inf, np.nan
    return (f - f_trial) / denom, f_trial


def _run_trust_region(engine, problem: NonlinearProblem, data: NoisyData,
                      x0: Array, cfg: SolverConfig,
                      sink=None, probe=None) -> SolverResult:
    x = _check_point(problem, x0).copy()
    if data.y_delta.shape != (problem.m,):
        raise ContractViolationError("data dimension does not match the problem")
    x_true = problem.known_solution
    mu = cfg.mu0
    records = []
    inner_total = 0
    stop_reason = "k_max"
    grad_tol = cfg.grad_tol
    callback_time = 0.0
    t0 = time.perf_counter()

    for k in range(cfg.k_max):
        Fx = problem.eval(x)
        res = Fx - data.y_delta
        f = 0.5 * float(res @ res)
        g = problem.jac_transpose_apply(x, res)
        gnorm = float(np.linalg.norm(g))
        if grad_tol is None:
            grad_tol = 1e-8 * max(1.0, gnorm)
        if gnorm == 0.0:
            stop_reason = "discrepancy" if data.delta > 0 else "gradient_tol"
            break
        if data.delta == 0.0 and gnorm <= grad_tol:
            stop_reason = "gradient_tol"
            break

        st = engine.factorize(x, g, gnorm, k)
        if data.delta > 0 and discrepancy_check(gnorm, st.jnorm_est,
                                                cfg.tau_bar, data.delta):
            stop_reason = "discrepancy"
            break

        Delta = min(max(mu * st.snorm, cfg.delta_min), cfg.delta_max)
        if cfg.enforce_radius_cap:
            cap = (1.0 - cfg.q) * st.snorm / st.sig[0] ** 2
            Delta = max(min(Delta, cap), cfg.delta_min)

        rejects = 0
        newton_iters = 0
        floored = False
        while True:
            delta_attempt = Delta
            w_hat, lam, active, iters, _ = secular_solve(
                st.sig, st.rcoef, Delta, cfg.secular)
            newton_iters += iters
            p = st.step_from_eig(w_hat)
            phi = (f + 0.5 * float(np.sum(st.sig**2 * w_hat**2))
                   + float(np.sum(np.sqrt(st.sig) * st.rcoef * w_hat)))
            x_trial = x + p
            pi, _f_trial = _trial_ratio(problem, x_trial, data, f, f - phi)
            if pi >= cfg.eta:
                break
            Delta *= cfg.gamma
            mu *= cfg.gamma  # the shrunken multiplier carries into the next iteration
            rejects += 1
            if Delta < cfg.delta_min:
                floored = True
                break

        inner_total += newton_iters
        q_k = float(np.linalg.norm(st.sig**1.5 * w_hat + st.rcoef)) / gnorm
        err = float(np.linalg.norm(x - x_true)) if x_true is not None else np.nan
        rec = IterationRecord(
            k=k, ell=len(st.sig), delta_k=delta_attempt, mu_k=mu, lambda_k=lam,
            g_norm=gnorm, f=f, residual=float(np.linalg.norm(res)),
            pi=float(pi), q_k=q_k, accepted=not floored, rejects=rejects,
            newton_iters=newton_iters, rank_one_norm=st.rank_one_norm,
            err_truth=err)
        records.append(rec)
        tcb = time.perf_counter()
        if sink is not None:
            sink(rec)
        if probe is not None and not floored:
            probe(k=k, x=x, g=g, gnorm=gnorm, f=f, state=st,
                  Delta=delta_attempt, w_hat=w_hat, lam=lam, p=p)
        callback_time += time.perf_counter() - tcb

        if floored:
            stop_reason = "radius_floor"
            break
        x = x_trial
        mu = radius_update(mu, q_k, pi, cfg)

    wall = time.perf_counter() - t0 - callback_time
    outer = sum(1 for r in records if r.accepted)
    return SolverResult(
        x_final=x,
        stop_reason=stop_reason,
        records=records,
        totals={"outer": outer, "inner": inner_total, "wall_time": wall},
    )


def ltr_solve(problem: NonlinearProblem, data: NoisyData, x0: Array,
              cfg: SolverConfig | None = None,
              sink=None, probe=None) -> SolverResult:
    """Run the Lanczos trust-region method from ``x0``.

    Per iteration: bidiagonalize J at the current point starting from the
    gradient, set the radius to ``mu_k`` times the square-rooted gradient
    norm, solve the projected subproblem, and shrink the radius by ``gamma``
    until the acceptance ratio reaches ``eta``.  Stops on the discrepancy
    principle (noisy data), the gradient tolerance (exact data), the radius
    floor, or the iteration cap.

    ``sink`` receives each ``IterationRecord`` as it is produced; ``probe``
    is invoked at every accepted step with keyword access to the internal
    factorization state (time spent in either is excluded from
    ``totals["wall_time"]``).
    """
    cfg = cfg or SolverConfig()
    return _run_trust_region(_LanczosEngine(problem, cfg), problem, data,
                             x0, cfg, sink=sink, probe=probe)
