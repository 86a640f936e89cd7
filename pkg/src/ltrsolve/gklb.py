"""Golub-Kahan-Lanczos partial bidiagonalization with configurable reorthogonalization.

Given matrix-vector products with A and A^T and a start vector q1, ``gklb``
builds orthonormal bases Q (input space) and P (output space) together with
the coefficients of an upper bidiagonal matrix T such that A Q = P T and
Q^T (A^T A) Q = T^T T.  Orthogonality of the bases degrades in floating
point; the reorthogonalization policy controls how it is repaired.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .exceptions import ContractViolationError, InvalidStartError

Array = np.ndarray

_EPS = float(np.finfo(float).eps)
_BREAKDOWN_RTOL = 1e-14
_FULL_REORTH_MAX_ELL = 200


@dataclass(frozen=True)
class ReorthPolicy:
    """Reorthogonalization mode: ``none``, ``full`` or ``partial``.

    In partial mode, inner products against earlier Lanczos vectors are
    tracked by the classical two-term recurrence estimates; a vector is
    reorthogonalized against its whole basis once any estimate exceeds
    ``eta_threshold``.
    """

    mode: str = "full"
    eta_threshold: float = float(np.sqrt(_EPS))

    def __post_init__(self):
        if self.mode not in ("none", "full", "partial"):
            raise ContractViolationError(f"unknown reorthogonalization mode {self.mode!r}")
        if not 0.0 < self.eta_threshold < 1.0:
            raise ContractViolationError("eta_threshold must lie in (0, 1)")

    @classmethod
    def default_for(cls, ell: int) -> "ReorthPolicy":
        # full reorthogonalization is affordable at the subspace sizes used here
        if ell <= _FULL_REORTH_MAX_ELL:
            return cls(mode="full")
        return cls(mode="partial")


@dataclass(frozen=True)
class Bidiagonalization:
    """Output of the bidiagonalization process.

    ``alphas``/``betas`` hold the diagonal and superdiagonal of the upper
    bidiagonal T (``betas[-1]`` couples to the next, not stored, basis
    vector ``q_next``).  ``breakdown`` is ``None`` or ``(index, kind)`` with
    ``kind`` in ``{"alpha", "beta"}`` when the recurrence terminated early.
    """

    alphas: Array
    betas: Array
    Q: Array
    P: Array
    q_next: Array
    ell: int
    breakdown: Optional[tuple] = None

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def m(self) -> int:
        return self.P.shape[0]

    @property
    def beta_last(self) -> float:
        return float(self.betas[-1]) if self.ell > 0 else 0.0

    def t_matrix(self) -> Array:
        """Dense upper bidiagonal T (ell x ell)."""
        T = np.diag(self.alphas)
        if self.ell > 1:
            T += np.diag(self.betas[: self.ell - 1], 1)
        return T


def _orthogonalize(v: Array, basis: Array) -> Array:
    """Remove components of v along the columns of basis (two sweeps)."""
    if basis.shape[1] == 0:
        return v
    v = v - basis @ (basis.T @ v)
    # unconditional second sweep: one sweep leaves enough drift to be seen
    # in the Frobenius orthogonality defect once hundreds of columns accrue
    v = v - basis @ (basis.T @ v)
    return v


def gklb(matvec: Callable[[Array], Array],
         rmatvec: Callable[[Array], Array],
         q1: Array,
         ell: int,
         policy: Optional[ReorthPolicy] = None) -> Bidiagonalization:
    """Run ``ell`` steps of Golub-Kahan-Lanczos bidiagonalization.

    Parameters
    ----------
    matvec, rmatvec : callable
        Products with A (R^n -> R^m) and A^T.
    q1 : array
        Nonzero start vector; the first column of Q is ``q1 / ||q1||``.
    ell : int
        Requested subspace dimension, ``1 <= ell <= n``.
    policy : ReorthPolicy, optional
        Defaults to full reorthogonalization for moderate ``ell``.

    A vanishing coupling coefficient (within ``1e-14 * max(alpha)``) truncates
    the factorization: the achieved dimension is returned in ``ell`` and the
    event is recorded in ``breakdown``.
    """
    q1 = np.asarray(q1, dtype=float)
    n = q1.shape[0]
    if not np.all(np.isfinite(q1)) or np.linalg.norm(q1) == 0.0:
        raise InvalidStartError("start vector must be finite and nonzero")
    if not 1 <= ell <= n:
        raise ContractViolationError(f"ell must lie in [1, {n}], got {ell}")
    if policy is None:
        policy = ReorthPolicy.default_for(ell)

    q = q1 / np.linalg.norm(q1)
    m = None
    Q = np.empty((n, ell + 1))
    Q[:, 0] = q
    P = None
    alphas = np.zeros(ell)
    betas = np.zeros(ell)
    anorm_est = 0.0
    breakdown = None
    achieved = 0

    # partial-reorthogonalization bookkeeping: mu[i] ~ p_j^T p_i, nu[i] ~ q^T q_i
    track = policy.mode == "partial"
    if track:
        mu_prev = np.zeros(ell + 1)
        mu_cur = np.zeros(ell + 1)
        nu_cur = np.zeros(ell + 2)
        nu_cur[0] = 1.0

    for j in range(ell):
        p = matvec(Q[:, j])
        if P is None:
            m = p.shape[0]
            P = np.empty((m, ell))
        if j > 0:
            p = p - betas[j - 1] * P[:, j - 1]
        if policy.mode == "full":
            p = _orthogonalize(p, P[:, :j])
        alpha = float(np.linalg.norm(p))
        anorm_est = max(anorm_est, alpha)
        if alpha <= _BREAKDOWN_RTOL * anorm_est or alpha == 0.0:
            if j == 0:
                raise InvalidStartError("operator annihilates the start vector")
            breakdown = (j + 1, "alpha")
            achieved = j
            break
        if track and j > 0:
            # p_j^T p_i = (beta_i nu_{j,i+1} + alpha_i nu_{j,i} - beta_{j-1} mu_{j-1,i}) / alpha_j
            i = np.arange(j)
            est = (betas[i] * nu_cur[i + 1] + alphas[i] * nu_cur[i]
                   - betas[j - 1] * mu_prev[i]) / alpha
            mu_cur[:j] = np.abs(est) + _EPS * (anorm_est / alpha + 1.0)
            if np.max(mu_cur[:j]) > policy.eta_threshold:
                p = _orthogonalize(p, P[:, :j])
                alpha = float(np.linalg.norm(p))
                mu_cur[:j] = _EPS
        alphas[j] = alpha
        P[:, j] = p / alpha
        if track:
            mu_cur[j] = 1.0

        qn = rmatvec(P[:, j]) - alpha * Q[:, j]
        if policy.mode == "full":
            qn = _orthogonalize(qn, Q[:, : j + 1])
        beta = float(np.linalg.norm(qn))
        if beta <= _BREAKDOWN_RTOL * anorm_est or beta == 0.0:
            betas[j] = 0.0
            breakdown = (j + 1, "beta")
            achieved = j + 1
            Q[:, j + 1] = 0.0
            break
        if track:
            # q_{j+1}^T q_i = (alpha_i mu_{j,i} + beta_{i-1} mu_{j,i-1} - alpha_j nu_{j,i}) / beta_j
            i = np.arange(j + 1)
            prev = np.where(i > 0, betas[np.maximum(i - 1, 0)] * mu_cur[np.maximum(i - 1, 0)], 0.0)
            est = (alphas[i] * mu_cur[i] + prev - alpha * nu_cur[i]) / beta
            nu_next = np.abs(est) + _EPS * (anorm_est / beta + 1.0)
            if np.max(nu_next) > policy.eta_threshold:
                qn = _orthogonalize(qn, Q[:, : j + 1])
                beta = float(np.linalg.norm(qn))
                nu_next[:] = _EPS
            nu_cur[: j + 1] = nu_next
            nu_cur[j + 1] = 1.0
            mu_prev, mu_cur = mu_cur, mu_prev
        betas[j] = beta
        Q[:, j + 1] = qn / beta
        achieved = j + 1

    ell_out = achieved
    return Bidiagonalization(
        alphas=alphas[:ell_out].copy(),
        betas=betas[:ell_out].copy(),
        Q=Q[:, :ell_out].copy(),
        P=P[:, :ell_out].copy(),
        q_next=Q[:, ell_out].copy() if breakdown is None or breakdown[1] != "beta"
        else np.zeros(n),
        ell=ell_out,
        breakdown=breakdown,
    )


def tridiagonal_gram(bid: Bidiagonalization) -> Array:
    """T^T T as a dense symmetric tridiagonal matrix.

    Diagonal entries are ``alpha_j^2 + beta_{j-1}^2`` and the off-diagonal
    coupling rows j and j+1 is ``alpha_j * beta_j`` (direct multiplication of
    the upper bidiagonal T with itself).
    """
    a, b, ell = bid.alphas, bid.betas, bid.ell
    diag = a**2
    if ell > 1:
        diag = diag + np.concatenate(([0.0], b[: ell - 1] ** 2))
    off = a[: ell - 1] * b[: ell - 1]
    G = np.diag(diag)
    if ell > 1:
        G += np.diag(off, 1) + np.diag(off, -1)
    return G


def factorization_residuals(bid: Bidiagonalization,
                            matvec: Callable[[Array], Array],
                            rmatvec: Callable[[Array], Array]) -> dict:
    """Frobenius norms of the factorization identities, plus the norm estimate.

    Returns the defects of A Q = P T, A^T P = Q T^T + beta q_next e_ell^T,
    orthonormality of Q and P, and Q^T (A^T A) Q = T^T T.
    """
    Q, P = bid.Q, bid.P
    ell = bid.ell
    T = bid.t_matrix()
    AQ = np.column_stack([matvec(Q[:, j]) for j in range(ell)])
    ATP = np.column_stack([rmatvec(P[:, j]) for j in range(ell)])
    BQ = np.column_stack([rmatvec(AQ[:, j]) for j in range(ell)])
    rank_one = bid.beta_last * np.outer(bid.q_next, np.eye(ell)[-1])
    eye = np.eye(ell)
    return {
        "aq_minus_pt": float(np.linalg.norm(AQ - P @ T)),
        "atp_minus_qtt": float(np.linalg.norm(ATP - Q @ T.T - rank_one)),
        "q_orth": float(np.linalg.norm(Q.T @ Q - eye)),
        "p_orth": float(np.linalg.norm(P.T @ P - eye)),
        "gram_defect": float(np.linalg.norm(Q.T @ BQ - tridiagonal_gram(bid))),
        "anorm_est": float(np.max(bid.alphas)) if ell else 0.0,
    }
