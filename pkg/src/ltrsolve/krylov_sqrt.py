"""Applying the square root of J^T J to vectors through a Lanczos factorization.

With A Q = P T from the bidiagonalization, the matrix square root of
B = A^T A restricted to the Krylov subspace is Q (T^T T)^{1/2} Q^T.  The
small root (T^T T)^{1/2} is always formed from the SVD of T itself as
V diag(s) V^T; eigendecomposing T^T T would square the condition number.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ContractViolationError
from .gklb import Bidiagonalization

Array = np.ndarray


@dataclass(frozen=True)
class SmallSVD:
    """Full SVD of the small bidiagonal matrix T = U diag(s) V^T."""

    U: Array
    s: Array
    Vt: Array

    @property
    def ell(self) -> int:
        return self.s.shape[0]

    @property
    def v_e1(self) -> Array:
        """V^T e_1, the first-basis-vector coordinates used throughout."""
        return self.Vt[:, 0]

    def sqrt_gram_apply(self, w: Array) -> Array:
        """(T^T T)^{1/2} w = V diag(s) V^T w."""
        return self.Vt.T @ (self.s * (self.Vt @ w))

    def sqrt_gram_e1(self) -> Array:
        """(T^T T)^{1/2} e_1."""
        return self.Vt.T @ (self.s * self.v_e1)


def small_svd(T: Array) -> SmallSVD:
    """Full SVD of a (small) square matrix, singular values descending."""
    T = np.atleast_2d(np.asarray(T, dtype=float))
    U, s, Vt = np.linalg.svd(T)
    return SmallSVD(U=U, s=s, Vt=Vt)


def sq(bid: Bidiagonalization, b: Array, tsvd: SmallSVD | None = None) -> Array:
    """Approximate B^{1/2} b as Q (T^T T)^{1/2} Q^T b.

    Exact when the factorization spans the whole space; otherwise the result
    is the square root evaluated on the Krylov subspace, expanded back.
    """
    b = np.asarray(b, dtype=float)
    if b.shape != (bid.n,):
        raise ContractViolationError(f"vector has shape {b.shape}, expected ({bid.n},)")
    if tsvd is None:
        tsvd = small_svd(bid.t_matrix())
    return bid.Q @ tsvd.sqrt_gram_apply(bid.Q.T @ b)


def s_tilde(bid: Bidiagonalization, g: Array, tsvd: SmallSVD | None = None) -> Array:
    """B^{1/2} g approximated through a factorization started at q1 = g.

    Uses Q^T g = ||g|| e_1, so only the first column of the small root is
    needed; never projects g explicitly.  Raises if the factorization was
    not started at g.
    """
    g = np.asarray(g, dtype=float)
    if g.shape != (bid.n,):
        raise ContractViolationError(f"vector has shape {g.shape}, expected ({bid.n},)")
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0.0 or np.linalg.norm(bid.Q[:, 0] - g / gnorm) > 1e-8:
        raise ContractViolationError("factorization was not started at this gradient")
    if tsvd is None:
        tsvd = small_svd(bid.t_matrix())
    return gnorm * (bid.Q @ tsvd.sqrt_gram_e1())
