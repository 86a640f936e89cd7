"""Projected elliptical trust-region subproblem: KKT system and secular equation.

The subproblem minimizes 0.5 w^T (T^T T)^2 w + ||g|| w^T (T^T T)^{1/2} e_1
over ||w|| <= Delta.  Its KKT system is diagonalized by the SVD of T, so all
quantities here are evaluated on spectral pairs ``(sig, rcoef)`` where
``sig`` holds the eigenvalues of T^T T (squared singular values of T) and
``rcoef`` the gradient coordinates in the eigenbasis.  The same core serves
the dense oracle, which passes the spectrum of J^T J instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import (
    ContractViolationError,
    SecularNonConvergenceError,
    SingularSystemError,
)
from .gklb import Bidiagonalization
from .krylov_sqrt import SmallSVD

Array = np.ndarray

_SING_RTOL = 1e-14


@dataclass(frozen=True)
class SecularConfig:
    """Newton tolerances for the secular equation psi(lam) = 1/||w|| - 1/Delta."""

    psi_tol: float = 1e-2
    max_newton: int = 50
    lambda_init: Optional[float] = None

    def __post_init__(self):
        if self.psi_tol <= 0:
            raise ContractViolationError("psi_tol must be positive")
        if self.max_newton < 1:
            raise ContractViolationError("max_newton must be >= 1")


@dataclass(frozen=True)
class KKTSolution:
    """Multiplier, solution and telemetry for the projected KKT system."""

    w: Array
    lam: float
    active: bool
    newton_iters: int
    trace: tuple = field(default=())

    @property
    def w_norm(self) -> float:
        return float(np.linalg.norm(self.w))


def _w_hat(lam: float, sig: Array, rcoef: Array) -> Array:
    """Solution coordinates -(sig^{1/2} r_i) / (sig_i^2 + lam) in the eigenbasis."""
    return -np.sqrt(sig) * rcoef / (sig**2 + lam)


def _w_norm(lam: float, sig: Array, rcoef: Array) -> float:
    return float(np.sqrt(np.sum(sig * rcoef**2 / (sig**2 + lam) ** 2)))


def _psi_prime(lam: float, sig: Array, rcoef: Array, wnorm: float) -> float:
    return float(np.sum(sig * rcoef**2 / (sig**2 + lam) ** 3) / wnorm**3)


def _pinv_w_hat(sig: Array, rcoef: Array) -> Array:
    """lam -> 0 limit of w(lam); zero modes contribute nothing."""
    w = np.zeros_like(rcoef)
    mask = sig > 0
    w[mask] = -rcoef[mask] / np.sqrt(sig[mask]) ** 3
    return w


def secular_solve(sig: Array, rcoef: Array, Delta: float,
                  cfg: SecularConfig | None = None):
    """Solve the KKT system on spectral coordinates.

    Returns ``(w_hat, lam, active, iters, trace)``.  Interior solutions
    (``||w(0)|| <= Delta`` with nonsingular spectrum) return ``lam = 0``;
    otherwise a bracketed Newton iteration locates the active multiplier,
    stopping once ``|psi| < psi_tol``.  Plain Newton on this concave function
    can jump below the root, so steps leaving the current bracket fall back
    to bisection; the iteration never leaves ``[0, lam_start]``.
    """
    if cfg is None:
        cfg = SecularConfig()
    if Delta <= 0:
        raise ContractViolationError(f"radius must be positive, got {Delta}")
    sig = np.asarray(sig, dtype=float)
    rcoef = np.asarray(rcoef, dtype=float)

    smax = float(np.sqrt(sig[0])) if sig[0] > 0 else 0.0
    w0 = _pinv_w_hat(sig, rcoef)
    w0_norm = float(np.linalg.norm(w0))
    if w0_norm <= Delta:
        # interior for nonsingular T; for a singular spectrum no positive
        # root exists either, so the minimum-norm limit is the solution
        return w0, 0.0, False, 0, ()

    gscale = float(np.linalg.norm(rcoef))
    lam = cfg.lambda_init if cfg.lambda_init is not None else \
        sig[0] * np.sqrt(max(smax * gscale / Delta, 0.0))
    lam = max(lam, np.finfo(float).tiny)
    # start above the root: psi is increasing, so double until psi >= 0
    for _ in range(200):
        if 1.0 / _w_norm(lam, sig, rcoef) - 1.0 / Delta >= 0.0:
            break
        lam *= 2.0

    lo, hi = 0.0, lam
    trace = []
    iters = 0
    while True:
        wnorm = _w_norm(lam, sig, rcoef)
        psi = 1.0 / wnorm - 1.0 / Delta
        trace.append(lam)
        if abs(psi) < cfg.psi_tol:
            return _w_hat(lam, sig, rcoef), float(lam), True, iters, tuple(trace)
        if iters >= cfg.max_newton:
            raise SecularNonConvergenceError(
                f"secular Newton did not reach |psi| < {cfg.psi_tol} "
                f"in {cfg.max_newton} iterations",
                last_lambda=float(lam),
                last_w=_w_hat(lam, sig, rcoef),
                iters=iters)
        if psi < 0.0:
            lo = lam
        else:
            hi = lam
        step = lam - psi / _psi_prime(lam, sig, rcoef, wnorm)
        if not lo < step < hi:
            step = 0.5 * (lo + hi)
        lam = step
        iters += 1


def _spectral_pairs(tsvd: SmallSVD, g_norm: float):
    sig = tsvd.s**2
    rcoef = g_norm * tsvd.v_e1
    return sig, rcoef


def solve_w(lam: float, tsvd: SmallSVD, g_norm: float):
    """Closed-form w(lam) solving [(T^T T)^2 + lam I] w = -(T^T T)^{1/2} ||g|| e_1.

    Returns ``(w, ||w||)``.  ``lam = 0`` requires a nonsingular T.
    """
    if lam < 0:
        raise ContractViolationError(f"lambda must be >= 0, got {lam}")
    if lam == 0 and tsvd.s[-1] <= _SING_RTOL * tsvd.s[0]:
        raise SingularSystemError("lambda = 0 requested with singular T")
    sig, rcoef = _spectral_pairs(tsvd, g_norm)
    w_hat = _w_hat(lam, sig, rcoef) if lam > 0 else _pinv_w_hat(sig, rcoef)
    w = tsvd.Vt.T @ w_hat
    return w, float(np.linalg.norm(w_hat))


def secular_newton(tsvd: SmallSVD, g_norm: float, Delta: float,
                   cfg: SecularConfig | None = None) -> KKTSolution:
    """Solve the projected trust-region KKT system for (w, lambda)."""
    if g_norm <= 0:
        raise ContractViolationError("gradient norm must be positive")
    sig, rcoef = _spectral_pairs(tsvd, g_norm)
    w_hat, lam, active, iters, trace = secular_solve(sig, rcoef, Delta, cfg)
    return KKTSolution(w=tsvd.Vt.T @ w_hat, lam=lam, active=active,
                       newton_iters=iters, trace=trace)


def recover_step(bid: Bidiagonalization, w: Array, tsvd: SmallSVD | None = None):
    """Lift a subproblem solution: z = Q w and p = Q (T^T T)^{1/2} w."""
    if tsvd is None:
        from .krylov_sqrt import small_svd
        tsvd = small_svd(bid.t_matrix())
    w = np.asarray(w, dtype=float)
    z = bid.Q @ w
    p = bid.Q @ tsvd.sqrt_gram_apply(w)
    return z, p


def model_phi(w: Array, tsvd: SmallSVD, g_norm: float, f_val: float) -> float:
    """Quadratic model 0.5 w^T (T^T T)^2 w + ||g|| w^T (T^T T)^{1/2} e_1 + f."""
    w_hat = tsvd.Vt @ np.asarray(w, dtype=float)
    quad = 0.5 * float(np.sum(tsvd.s**4 * w_hat**2))
    lin = g_norm * float(np.sum(tsvd.s * w_hat * tsvd.v_e1))
    return quad + lin + f_val


def cauchy_point(tsvd: SmallSVD, g_norm: float, Delta: float) -> Array:
    """Constrained minimizer of the model along its negative gradient at 0."""
    if Delta <= 0:
        raise ContractViolationError(f"radius must be positive, got {Delta}")
    d_hat = g_norm * tsvd.s * tsvd.v_e1          # model gradient, eigenbasis
    dnorm = float(np.linalg.norm(d_hat))
    if dnorm == 0.0:
        return np.zeros(tsvd.ell)
    curv = float(np.sum(tsvd.s**4 * d_hat**2))   # d^T (T^T T)^2 d
    alpha = Delta / dnorm
    if curv > 0:
        alpha = min(alpha, dnorm**2 / curv)
    return -alpha * (tsvd.Vt.T @ d_hat)


def projected_model_norm(tsvd: SmallSVD, w: Array, g_norm: float) -> float:
    """||T^T T (T^T T)^{1/2} w + ||g|| e_1||, the projected model-gradient norm."""
    w_hat = tsvd.Vt @ np.asarray(w, dtype=float)
    return float(np.linalg.norm(tsvd.s**3 * w_hat + g_norm * tsvd.v_e1))


def radius_cap_for_q(tsvd: SmallSVD, g_norm: float, q: float) -> float:
    """Largest radius guaranteeing the projected model-norm condition.

    Radii below ``(1 - q) ||(T^T T)^{1/2} Q^T g|| / ||T^T T||^2`` force the
    active multiplier beyond the value at which the projected model-gradient
    norm reaches ``q ||g||``.
    """
    sig, rcoef = _spectral_pairs(tsvd, g_norm)
    return float((1.0 - q) * np.linalg.norm(np.sqrt(sig) * rcoef) / sig[0] ** 2)
