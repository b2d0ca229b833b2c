"""Sparse symmetric generalized eigenproblems and weighted operator norms.

Everything here works with a pair (K, M): a symmetric positive semidefinite
"stiffness" K and a symmetric positive definite "mass" M.  M defines the
discrete L2 inner product; all adjoints and norms are taken with respect to it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import FactorizationFailure, NoConvergence

logger = logging.getLogger(__name__)

DENSE_LIMIT = 2000
RESIDUAL_TOL = 1e-8
CLUSTER_RTOL = 1e-6


@dataclass
class WeightedOperatorPair:
    """A discrete self-adjoint operator ``M^{-1} K`` in the M-weighted space."""

    K: sp.csr_matrix
    M: sp.csr_matrix

    @property
    def n(self) -> int:
        return self.K.shape[0]


@dataclass
class EigResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, M-orthonormal
    residuals: np.ndarray  # ||K x - lam M x||_{M^-1}

    def converged(self, tol: float = RESIDUAL_TOL) -> bool:
        return bool(np.all(self.residuals <= tol * (1.0 + np.abs(self.eigenvalues))))


class Factorized:
    """Sparse LU of a square matrix, with a :class:`FactorizationFailure` on singularity."""

    def __init__(self, A):
        A = sp.csc_matrix(A)
        try:
            self._lu = spla.splu(A)
        except RuntimeError as exc:  # "Factor is exactly singular"
            raise FactorizationFailure(str(exc)) from exc
        self.shape = A.shape

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._lu.solve(np.asarray(b, dtype=float))

    __call__ = solve


def seeded_vector(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(n)


def m_inverse_norms(R: np.ndarray, Minv: Factorized) -> np.ndarray:
    """Column-wise ``sqrt(r^T M^{-1} r)``."""
    if R.ndim == 1:
        R = R[:, None]
    Y = Minv.solve(R)
    return np.sqrt(np.maximum(np.einsum("ij,ij->j", R, Y), 0.0))


def smallest_eigenpairs(
    K,
    M,
    k: int,
    sigma: float | None = None,
    *,
    seed: int = 0,
    dense_below: int = DENSE_LIMIT,
    tol: float = RESIDUAL_TOL,
    maxiter: int = 500,
) -> EigResult:
    """The ``k`` smallest eigenpairs of ``K x = lam M x``.

    Shift-invert Lanczos (ARPACK) on ``(K - sigma M)^{-1} M`` with a sparse LU
    factorisation; problems smaller than ``dense_below`` go to LAPACK.
    ``sigma`` must lie below the smallest eigenvalue; the default of -1 keeps
    ``K - sigma M`` positive definite for any positive semidefinite K.
    """
    K = sp.csr_matrix(K)
    M = sp.csr_matrix(M)
    n = K.shape[0]
    if k < 1:
        raise ValueError("k must be at least 1")
    k = min(k, n)
    if sigma is None:
        sigma = -1.0

    if n < dense_below or k >= n - 1:
        try:
            vals, vecs = sla.eigh(K.toarray(), M.toarray(), subset_by_index=[0, k - 1])
        except np.linalg.LinAlgError as exc:
            raise FactorizationFailure(str(exc)) from exc
    else:
        lu = Factorized(K - sigma * M)
        op = spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)
        try:
            mu, vecs = spla.eigsh(
                K,
                k=k,
                M=M,
                sigma=sigma,
                which="LM",
                OPinv=op,
                v0=seeded_vector(n, seed),
                tol=1e-13,
                maxiter=maxiter * n,
            )
        except spla.ArpackNoConvergence as exc:
            raise NoConvergence(f"ARPACK did not converge: {exc}") from exc
        vals = mu
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        # M-orthonormalise inside clusters; ARPACK's vectors are close already.
        G = vecs.T @ (M @ vecs)
        L = np.linalg.cholesky(0.5 * (G + G.T))
        vecs = np.linalg.solve(L, vecs.T).T

    Minv = Factorized(M)
    R = K @ vecs - (M @ vecs) * vals
    res = m_inverse_norms(R, Minv)
    out = EigResult(np.asarray(vals), np.asarray(vecs), res)
    if not out.converged(tol):
        raise NoConvergence(
            f"eigen-residuals above tolerance (max {res.max():.3e})", residuals=res
        )
    return out


def cluster_ids(values, rtol: float = CLUSTER_RTOL) -> np.ndarray:
    """Label sorted eigenvalues so that values within ``rtol * max(1, |lam|)`` share an id."""
    values = np.asarray(values, dtype=float)
    ids = np.zeros(len(values), dtype=int)
    for i in range(1, len(values)):
        gap = values[i] - values[i - 1]
        ids[i] = ids[i - 1] + (1 if gap > rtol * max(1.0, abs(values[i])) else 0)
    return ids


def clusters(values, rtol: float = CLUSTER_RTOL) -> list[np.ndarray]:
    ids = cluster_ids(values, rtol)
    values = np.asarray(values, dtype=float)
    return [values[ids == c] for c in range(ids.max() + 1 if len(ids) else 0)]


def weighted_operator_norm(
    apply: Callable[[np.ndarray], np.ndarray],
    apply_adjoint: Callable[[np.ndarray], np.ndarray],
    M_src,
    n_src: int,
    *,
    rtol: float = 1e-4,
    maxiter: int = 300,
    seed: int = 0,
    atol: float = 1e-12,
) -> float:
    """Largest singular value of ``A`` between M-weighted spaces.

    Power iteration on ``A* A`` where ``A*`` is the weighted adjoint supplied
    by ``apply_adjoint``; the estimate is the Rayleigh quotient
    ``sqrt(<A*A x, x>_M)``.  Returns ``||A||`` (not its square).  Norms
    below ``atol`` are treated as zero (rounding noise never settles).
    """
    x = seeded_vector(n_src, seed)
    x /= np.sqrt(x @ (M_src @ x))
    est = 0.0
    for it in range(maxiter):
        y = apply_adjoint(apply(x))
        rq = float(y @ (M_src @ x))  # <A*A x, x>_M = ||A x||^2
        nrm = np.sqrt(max(y @ (M_src @ y), 0.0))
        if nrm == 0.0:
            return 0.0
        new = np.sqrt(max(rq, 0.0))
        x = y / nrm
        if it > 2 and (abs(new - est) <= rtol * new or new <= atol):
            est = new
            break
        est = new
    else:
        logger.warning("power iteration stopped after %d steps (rel. change above %g)", maxiter, rtol)
    return float(est)
