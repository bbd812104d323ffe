"""Low-lying spectra, ground-sector detection and ground projectors."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .hilbert import hermiticity_defect
from .linalg import DENSE_LIMIT, as_dense

__all__ = [
    "SpectralError",
    "NoGapError",
    "SpectralData",
    "GroundProjector",
    "lowest_eigenpairs",
    "detect_ground_sector",
    "ground_sector",
    "ground_projector",
    "ground_expectation",
    "energy_scale",
]

log = logging.getLogger(__name__)


class SpectralError(RuntimeError):
    pass


class NoGapError(SpectralError):
    """Raised when no admissible ground-sector/gap split exists."""

    def __init__(self, msg: str = "no uniform gap detected"):
        super().__init__(msg)


@dataclass
class SpectralData:
    """Low-lying spectrum split into a ground sector and the rest.

    ``gap`` is ``E1 - max E0`` and ``spread`` is ``max E0 - min E0``.
    """

    eigenvalues: np.ndarray
    q: int
    gap: float
    spread: float
    mean_ground: float
    E1: float
    eigenvectors: np.ndarray | None = field(default=None, repr=False)

    @property
    def ground_energies(self) -> np.ndarray:
        return self.eigenvalues[: self.q]

    @property
    def ground_vectors(self) -> np.ndarray:
        if self.eigenvectors is None:
            raise SpectralError("eigenvectors were not kept")
        return self.eigenvectors[:, : self.q]

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [float(e) for e in self.eigenvalues],
            "ground_energies": [float(e) for e in self.ground_energies],
            "q": self.q,
            "gap": self.gap,
            "spread": self.spread,
            "mean_ground": self.mean_ground,
            "E1": self.E1,
        }


def energy_scale(H) -> float:
    """Cheap upper bound on ``||H||``: the largest absolute column sum."""
    if sp.issparse(H):
        return float(abs(H).sum(axis=0).max()) if H.nnz else 0.0
    return float(np.abs(H).sum(axis=0).max()) if H.size else 0.0


def _real_if_possible(H):
    if sp.issparse(H):
        if H.dtype.kind == "c" and (H.nnz == 0 or np.abs(H.data.imag).max() == 0.0):
            return H.real.tocsr()
        return H
    if np.iscomplexobj(H) and not np.any(H.imag):
        return H.real
    return H


def lowest_eigenpairs(H, k: int, residual_tol: float = 1e-8, maxiter: int | None = None):
    """``k`` lowest eigenvalues (ascending) and orthonormal eigenvectors.

    Dense ``eigh`` below the dense limit, ARPACK Lanczos above. ``k`` is
    clamped to the dimension.
    """
    if hermiticity_defect(H) > 1e-12:
        raise SpectralError("matrix is not hermitian")
    n = H.shape[0]
    k = max(1, min(k, n))
    H = _real_if_possible(H)
    if n <= DENSE_LIMIT or k >= n - 1:
        w, v = la.eigh(as_dense(H), subset_by_index=[0, k - 1])
    else:
        try:
            w, v = spla.eigsh(H, k=k, which="SA", tol=1e-13, maxiter=maxiter,
                              v0=np.ones(n, dtype=H.dtype))
        except spla.ArpackNoConvergence as exc:
            raise SpectralError(f"Lanczos did not converge for k={k}") from exc
        order = np.argsort(w)
        w, v = w[order], v[:, order]
    res = np.linalg.norm(H @ v - v * w, axis=0)
    scale = max(1.0, float(np.abs(w).max()))
    if np.any(res > residual_tol * scale):
        raise SpectralError(f"eigenpair residual {res.max():.2e} above tolerance")
    return w, v


def detect_ground_sector(eigs, eps_deg: float | None = None, gap_min: float = 1e-3,
                         scale: float | None = None) -> SpectralData:
    """Split an ascending spectrum into a ``q``-fold ground sector and the rest.

    The ground sector is every eigenvalue within ``eps_deg`` of the lowest
    one; the next eigenvalue must lie at least ``gap_min`` higher. The
    default ``eps_deg`` is ``1e-6 * scale`` (scale defaults to the largest
    absolute eigenvalue supplied, or 1).
    """
    eigs = np.asarray(eigs, dtype=float)
    if eigs.size < 2:
        raise NoGapError("need at least two eigenvalues to detect a gap")
    if np.any(np.diff(eigs) < -1e-12):
        raise SpectralError("eigenvalues must be ascending")
    if eps_deg is None:
        if scale is None:
            scale = max(1.0, float(np.abs(eigs).max()))
        eps_deg = 1e-6 * scale
    q = int(np.count_nonzero(eigs - eigs[0] <= eps_deg))
    if q >= eigs.size:
        raise NoGapError("no uniform gap detected: every supplied eigenvalue is in the ground cluster")
    jump = eigs[q] - eigs[q - 1]
    if jump < gap_min:
        raise NoGapError(f"no uniform gap detected: jump {jump:.3e} below gap_min {gap_min:.3e}")
    ground = eigs[:q]
    return SpectralData(eigs, q, float(eigs[q] - ground.max()), float(ground.max() - ground.min()),
                        float(ground.mean()), float(eigs[q]))


def ground_sector(H, eps_deg: float | None = None, gap_min: float = 1e-3,
                  k0: int = 8, k_max: int = 32) -> SpectralData:
    """Eigen-solve with adaptive ``k`` until the ground/gap split is stable."""
    n = H.shape[0]
    scale = energy_scale(H)
    if eps_deg is None:
        eps_deg = 1e-6 * max(scale, 1.0)
    k = min(k0, n)
    while True:
        w, v = lowest_eigenpairs(H, k)
        q = int(np.count_nonzero(w - w[0] <= eps_deg))
        # once an eigenvalue lies outside the cluster, q is final
        if q < k or k >= min(k_max, n):
            break
        k = min(2 * k, k_max, n)
    data = detect_ground_sector(w, eps_deg, gap_min)
    data.eigenvectors = v
    log.debug("ground sector: q=%d gap=%.6g spread=%.3g (k=%d)", data.q, data.gap, data.spread, k)
    return data


@dataclass(frozen=True)
class GroundProjector:
    """Orthogonal projector ``V V^dagger`` onto the ground sector."""

    vectors: np.ndarray

    @property
    def rank(self) -> int:
        return self.vectors.shape[1]

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    def matrix(self) -> np.ndarray:
        return self.vectors @ self.vectors.conj().T

    def trace_with(self, A) -> complex:
        """``Tr(A P)``."""
        V = self.vectors
        return complex(np.einsum("ij,ij->", V.conj(), A @ V))


def ground_projector(eigvecs: np.ndarray, orth_tol: float = 1e-10) -> GroundProjector:
    V = np.asarray(eigvecs, dtype=complex)
    if V.ndim == 1:
        V = V[:, None]
    gram = V.conj().T @ V
    if np.abs(gram - np.eye(V.shape[1])).max() > orth_tol:
        raise SpectralError("ground vectors are not orthonormal")
    return GroundProjector(V)


def ground_expectation(A, P: GroundProjector, qM: int) -> complex:
    """``Tr(A P) / qM``."""
    if P.rank != qM:
        raise SpectralError(f"projector rank {P.rank} does not match q = {qM}")
    return P.trace_with(A) / qM
