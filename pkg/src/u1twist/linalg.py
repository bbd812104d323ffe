"""Exact operator norms at desk scale.

Below ``DENSE_LIMIT`` everything is done with dense LAPACK calls. Above it
hermitian norms come from ARPACK, and inverse norms from a sparse LU plus
Lanczos on ``A^{-H} A^{-1}``, with the residual checked before returning.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_LIMIT = 2000


class NormCertificationError(RuntimeError):
    pass


def as_dense(A) -> np.ndarray:
    return A.toarray() if sp.issparse(A) else np.asarray(A)


def operator_norm(A, hermitian: bool = False, rtol: float = 1e-8) -> float:
    """Spectral norm ``||A||_2``."""
    n = max(A.shape)
    if n == 0:
        return 0.0
    if sp.issparse(A) and A.nnz == 0:
        return 0.0
    if n <= DENSE_LIMIT:
        M = as_dense(A)
        if hermitian:
            return float(np.abs(la.eigvalsh(M)).max())
        return float(la.svdvals(M)[0])
    if hermitian:
        vals, vecs = spla.eigsh(A, k=1, which="LM", tol=1e-12)
        lam, v = vals[0], vecs[:, 0]
        res = np.linalg.norm(A @ v - lam * v)
        if res > rtol * abs(lam) + 1e-14:
            raise NormCertificationError(f"eigsh residual {res:.2e} too large")
        return float(abs(lam))
    AhA = spla.LinearOperator((A.shape[1], A.shape[1]),
                              matvec=lambda x: A.conj().T @ (A @ x), dtype=complex)
    vals, vecs = spla.eigsh(AhA, k=1, which="LA", tol=1e-12)
    lam, v = vals[0], vecs[:, 0]
    res = np.linalg.norm(AhA @ v - lam * v)
    if res > rtol * abs(lam) + 1e-14:
        raise NormCertificationError(f"power-iteration residual {res:.2e} too large")
    return float(np.sqrt(max(lam, 0.0)))


def inverse_norm(A, rtol: float = 1e-8) -> float:
    """``||A^{-1}||_2 = 1 / sigma_min(A)`` for a square matrix."""
    n = A.shape[0]
    if n <= DENSE_LIMIT:
        s = la.svdvals(as_dense(A))
        if s[-1] == 0.0:
            return np.inf
        return float(1.0 / s[-1])
    lu = spla.splu(sp.csc_matrix(A, dtype=complex))

    def mv(x):
        return lu.solve(lu.solve(np.asarray(x, dtype=complex)), trans="H")

    op = spla.LinearOperator((n, n), matvec=mv, dtype=complex)
    vals, vecs = spla.eigsh(op, k=1, which="LA", tol=1e-12)
    lam, v = vals[0], vecs[:, 0]
    res = np.linalg.norm(op @ v - lam * v)
    if res > rtol * lam:
        raise NormCertificationError(f"inverse-norm residual {res:.2e} too large")
    return float(np.sqrt(lam))


def lowrank_norm(left: np.ndarray, right: np.ndarray) -> float:
    """``||left @ right||_2`` for thin ``left`` (n, k) and wide ``right`` (k, n)."""
    q1, r1 = np.linalg.qr(left)
    q2, r2 = np.linalg.qr(right.conj().T)
    return float(la.svdvals(r1 @ r2.conj().T)[0])
