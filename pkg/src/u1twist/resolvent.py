"""Twisted resolvent, rectangular contour and the twisted ground projector.

Inside a fixed sector the twisted Hamiltonian ``H' = H + K + iL`` is similar
to ``H``, so its Riesz projector over a rectangle around the ground energies
is ``G(2a)^{-1} P G(2a)``. The rectangle has vertical sides at ``E_-`` and
``E_+`` (each at distance ``>= dE/2`` from the spectrum) and horizontal
sides at ``+-i y0`` with ``y0 > ||L||``.

The projector is never formed densely: it is probed with random blocks
through shifted sparse LU solves and stored as a rank-``q`` factorisation.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .linalg import inverse_norm, lowrank_norm, operator_norm
from .spectral import SpectralData
from .twist import LemmaReport, TwistOperators, double_commutator

__all__ = [
    "ResolventError",
    "NoAdmissibleTwistError",
    "Contour",
    "TwistedProjector",
    "GapMarginReport",
    "choose_contour",
    "contour_project",
    "direct_twisted_factors",
    "f_alpha",
    "check_matrix_element_lemma",
    "alpha0_search",
    "sample_resolvent",
    "check_resolvent_lemmas",
    "norm_P2alpha_bound",
    "projector_norm_ceiling",
]

log = logging.getLogger(__name__)

PANEL = 16
_GL = np.polynomial.legendre.leggauss(PANEL)
SEGMENTS = ("right", "top", "left", "bottom")


class ResolventError(RuntimeError):
    pass


class NoAdmissibleTwistError(ResolventError):
    def __init__(self, msg: str = "no admissible twist strength at this volume"):
        super().__init__(msg)


# ----------------------------------------------------------------------------
# contour
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Contour:
    """Counterclockwise rectangle ``[E_-, E_+] x [-y0, y0]``."""

    E_minus: float
    E_plus: float
    y0: float
    L_norm: float = 0.0

    @property
    def C3(self) -> float:
        return self.y0 - self.L_norm

    @property
    def width(self) -> float:
        return self.E_plus - self.E_minus

    def corners(self) -> dict[str, tuple[complex, complex]]:
        """Start and end point of each side, in traversal order."""
        a, b, y = self.E_minus, self.E_plus, self.y0
        return {
            "right": (complex(b, -y), complex(b, y)),
            "top": (complex(b, y), complex(a, y)),
            "left": (complex(a, y), complex(a, -y)),
            "bottom": (complex(a, -y), complex(b, -y)),
        }

    def segment_nodes(self, name: str, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Composite Gauss-Legendre nodes ``z`` and weights ``dz`` on one side.

        ``n`` is rounded up to a multiple of the panel size.
        """
        panels = max(1, -(-n // PANEL))
        z0, z1 = self.corners()[name]
        x, w = _GL
        edges = np.linspace(0.0, 1.0, panels + 1)
        h = np.diff(edges)
        t = (edges[:-1, None] + 0.5 * h[:, None] * (x[None, :] + 1.0)).ravel()
        wt = (0.5 * h[:, None] * w[None, :]).ravel()
        return z0 + (z1 - z0) * t, (z1 - z0) * wt

    def nodes(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        parts = [self.segment_nodes(s, n) for s in SEGMENTS]
        return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])

    def sample_points(self, name: str, n: int) -> np.ndarray:
        """``n`` equispaced points on a side, endpoints included."""
        z0, z1 = self.corners()[name]
        return z0 + (z1 - z0) * np.linspace(0.0, 1.0, n)

    def to_dict(self) -> dict:
        return {"E_minus": self.E_minus, "E_plus": self.E_plus, "y0": self.y0,
                "L_norm": self.L_norm, "C3": self.C3}


def choose_contour(spectral: SpectralData, L_norm: float, inflate: float = 1.0) -> Contour:
    """Rectangle with ``E_- = min E0 - dE/2``, ``E_+ = max E0 + dE/2`` and
    ``y0 = ||L|| + max(1, dE)`` (times ``inflate``)."""
    if not spectral.gap > 0.0:
        raise ResolventError("contour needs a positive gap")
    g = spectral.ground_energies
    y0 = (L_norm + max(1.0, spectral.gap)) * inflate
    return Contour(float(g.min() - spectral.gap / 2.0), float(g.max() + spectral.gap / 2.0),
                   float(y0), float(L_norm))


# ----------------------------------------------------------------------------
# contour projector
# ----------------------------------------------------------------------------

@dataclass
class TwistedProjector:
    """``P = left @ right`` with ``left`` (n, q) and ``right`` (q, n)."""

    left: np.ndarray = field(repr=False)
    right: np.ndarray = field(repr=False)
    norm: float
    idempotence_defect: float
    quadrature_error: float
    nodes_per_segment: int
    trace: complex
    oracle_distance: float | None = None

    @property
    def rank(self) -> int:
        return self.left.shape[1]

    def matrix(self) -> np.ndarray:
        return self.left @ self.right

    def trace_with(self, A) -> complex:
        """``Tr(A P)``."""
        return complex(np.einsum("ij,ji->", self.right, A @ self.left))

    def to_dict(self) -> dict:
        return {"norm": self.norm, "idempotence_defect": self.idempotence_defect,
                "quadrature_error": self.quadrature_error,
                "nodes_per_segment": self.nodes_per_segment,
                "trace_re": self.trace.real, "trace_im": self.trace.imag,
                "oracle_distance": self.oracle_distance}


def direct_twisted_factors(G2, vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Factors of ``G^{-1} V V^dagger G`` for a positive diagonal ``G``."""
    g = np.asarray(G2.diagonal() if sp.issparse(G2) else np.diag(G2)).real
    V = np.asarray(vectors)
    return V / g[:, None], (V * g[:, None]).conj().T


def _probe_sums(Hp: sp.csc_matrix, z: np.ndarray, w: np.ndarray, X: np.ndarray, Y: np.ndarray,
                workers: int) -> tuple[np.ndarray, np.ndarray]:
    """``P X`` and ``P^dagger Y`` by quadrature, summed in node order."""
    n = Hp.shape[0]
    eye = sp.identity(n, dtype=complex, format="csc")

    def one(k):
        lu = spla.splu((z[k] * eye - Hp).tocsc())
        c = w[k] / (2j * math.pi)
        return c * lu.solve(X), np.conj(c) * lu.solve(Y, trans="H")

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(one, range(len(z))))
    else:
        parts = [one(k) for k in range(len(z))]
    PX = np.zeros_like(X)
    PhY = np.zeros_like(Y)
    for a, b in parts:
        PX += a
        PhY += b
    return PX, PhY


def _nystrom(PX: np.ndarray, PhY: np.ndarray, Y: np.ndarray, q: int) -> tuple[np.ndarray, np.ndarray]:
    core = Y.conj().T @ PX
    u, s, vh = la.svd(core)
    # PX pinv_q(Y^dagger P X) Y^dagger P, split as (PX V S^-1)(U^dagger Y^dagger P)
    left = PX @ (vh[:q].conj().T / s[:q])
    right = u[:, :q].conj().T @ PhY.conj().T
    return left, right


def contour_project(Hprime, contour: Contour, q: int, *, tol: float = 1e-8,
                    n_start: int = 32, n_max: int = 1024, oversample: int = 4,
                    seed: int = 0, oracle: tuple[np.ndarray, np.ndarray] | None = None,
                    workers: int = 1) -> TwistedProjector:
    """Riesz projector ``(1/2 pi i) oint dz (z - H')^{-1}`` of rank ``q``.

    Nodes per side start at ``n_start`` and double until both the change in
    ``||P||`` and the idempotence defect drop below ``tol``. A singular
    shifted solve triggers one retry on a contour with doubled ``y0``.
    """
    try:
        return _contour_project(Hprime, contour, q, tol, n_start, n_max, oversample, seed,
                                oracle, workers)
    except RuntimeError as exc:
        if isinstance(exc, ResolventError):
            raise
        log.warning("singular shifted solve (%s); retrying on an inflated contour", exc)
    bigger = Contour(contour.E_minus, contour.E_plus, 2.0 * contour.y0, contour.L_norm)
    try:
        return _contour_project(Hprime, bigger, q, tol, n_start, n_max, oversample, seed,
                                oracle, workers)
    except RuntimeError as exc:
        raise ResolventError(f"shifted solve failed twice: {exc}") from exc


def _contour_project(Hprime, contour, q, tol, n_start, n_max, oversample, seed, oracle, workers):
    Hp = sp.csc_matrix(Hprime, dtype=complex)
    n = Hp.shape[0]
    if not 1 <= q <= n:
        raise ResolventError(f"rank {q} out of range for dimension {n}")
    k = min(n, q + oversample)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    Y = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    prev = None
    m = n_start
    while True:
        z, w = contour.nodes(m)
        PX, PhY = _probe_sums(Hp, z, w, X, Y, workers)
        left, right = _nystrom(PX, PhY, Y, q)
        nrm = lowrank_norm(left, right)
        defect = lowrank_norm(left, (right @ left) @ right - right)
        change = math.inf if prev is None else abs(nrm - prev)
        log.debug("contour nodes/side=%d norm=%.12g change=%.2e defect=%.2e", m, nrm, change, defect)
        if change < tol and defect < tol:
            break
        if 2 * m > n_max:
            raise ResolventError(f"quadrature not converged at {m} nodes per side "
                                 f"(change {change:.2e}, defect {defect:.2e})")
        prev = nrm
        m *= 2
    trace = complex(np.trace(right @ left))
    dist = None
    if oracle is not None:
        A, B = oracle
        dist = lowrank_norm(np.hstack([left, -A]), np.vstack([right, B]))
    return TwistedProjector(left, right, nrm, defect, change, m, trace, dist)


# ----------------------------------------------------------------------------
# gap margin and alpha_0
# ----------------------------------------------------------------------------

@dataclass
class GapMarginReport:
    alpha: float
    f: float
    K_norm: float
    L_norm: float
    dc_norm: float
    gap: float
    C4_required: float

    @property
    def margin(self) -> float:
        """``dE/2 - ||K|| - f``."""
        return self.gap / 2.0 - self.K_norm - self.f

    @property
    def admissible(self) -> bool:
        return self.margin >= self.C4_required

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "f": self.f, "K_norm": self.K_norm, "L_norm": self.L_norm,
                "dc_norm": self.dc_norm, "gap": self.gap, "margin": self.margin,
                "C4_required": self.C4_required, "admissible": self.admissible}


def f_alpha(H, ops: TwistOperators, spectral: SpectralData, c4_fraction: float = 0.125,
            *, K_norm: float | None = None, L_norm: float | None = None,
            dc_norm: float | None = None) -> GapMarginReport:
    """``f = sqrt(||[L,[H,L]]|| / (2 dE) + 2 (spread/dE) ||L||^2)`` and the gap margin."""
    if not spectral.gap > 0.0:
        raise ResolventError("f needs a positive gap")
    if K_norm is None:
        K_norm = operator_norm(ops.K, hermitian=True)
    if L_norm is None:
        L_norm = operator_norm(ops.L, hermitian=True)
    if dc_norm is None:
        dc_norm = operator_norm(double_commutator(H, ops.L), hermitian=True)
    f = math.sqrt(dc_norm / (2.0 * spectral.gap) + 2.0 * spectral.spread / spectral.gap * L_norm ** 2)
    return GapMarginReport(ops.alpha, f, K_norm, L_norm, dc_norm, spectral.gap,
                           c4_fraction * spectral.gap)


def check_matrix_element_lemma(L, vectors: np.ndarray, f: float, trials: int = 100,
                               seed: int = 0) -> LemmaReport:
    """``|<Phi+, L Phi->| <= f ||Phi+|| ||Phi-||`` on random vectors.

    ``Phi- = P Phi`` and ``Phi+ = Phi - Phi-`` with ``P`` the ground projector
    spanned by ``vectors``. The report holds the worst trial (largest
    ``lhs/rhs``); its constants also carry the exact supremum
    ``||(1-P) L P||`` of the ratio.
    """
    V = np.asarray(vectors, dtype=complex)
    n = V.shape[0]
    rng = np.random.default_rng(seed)
    worst = (0.0, 0.0, -math.inf)
    for _ in range(trials):
        phi = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        minus = V @ (V.conj().T @ phi)
        plus = phi - minus
        lhs = abs(np.vdot(plus, L @ minus))
        rhs = f * np.linalg.norm(plus) * np.linalg.norm(minus)
        ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
        if ratio > worst[2]:
            worst = (float(lhs), float(rhs), ratio)
    LV = L @ V
    off = LV - V @ (V.conj().T @ LV)
    sup = float(la.svdvals(off)[0]) if off.size else 0.0
    return LemmaReport("matrix_element", worst[0], worst[1],
                       {"f": f, "trials": trials, "seed": seed, "exact_sup": sup})


def alpha0_search(reports: list[GapMarginReport]) -> float:
    """Largest grid ``alpha`` such that every grid point up to it is admissible."""
    alpha0 = None
    for r in sorted(reports, key=lambda r: r.alpha):
        if r.alpha <= 0.0:
            continue
        if not r.admissible:
            break
        alpha0 = r.alpha
    if alpha0 is None:
        raise NoAdmissibleTwistError()
    return alpha0


# ----------------------------------------------------------------------------
# resolvent ceilings
# ----------------------------------------------------------------------------

def sample_resolvent(Hprime, contour: Contour, samples: int = 17) -> dict[str, np.ndarray]:
    """``||(H' - z)^{-1}||`` at equispaced points on every side."""
    Hp = sp.csc_matrix(Hprime, dtype=complex)
    eye = sp.identity(Hp.shape[0], dtype=complex, format="csc")
    return {s: np.array([inverse_norm(Hp - z * eye) for z in contour.sample_points(s, samples)])
            for s in SEGMENTS}


def check_resolvent_lemmas(Hprime, contour: Contour, margin: GapMarginReport,
                           samples: int = 17, values: dict | None = None) -> dict[str, LemmaReport]:
    """Sampled resolvent norms against ``1/C4`` (vertical) and ``1/C3`` (horizontal).

    The constants also record the sharper per-side ceilings that the proofs
    give directly: ``1/(dE/2 - ||K|| - f)`` at ``E_+`` and
    ``1/(dE/2 - ||K||)`` at ``E_-``.
    """
    if values is None:
        values = sample_resolvent(Hprime, contour, samples)
    c4 = margin.C4_required
    direct = {"right": margin.gap / 2.0 - margin.K_norm - margin.f,
              "left": margin.gap / 2.0 - margin.K_norm}
    out = {}
    for s in SEGMENTS:
        lhs = float(values[s].max())
        if s in ("right", "left"):
            rhs = 1.0 / c4 if c4 > 0 else math.inf
            extra = {"C4": c4, "direct_ceiling": 1.0 / direct[s] if direct[s] > 0 else math.inf}
        else:
            rhs = 1.0 / contour.C3 if contour.C3 > 0 else math.inf
            extra = {"C3": contour.C3}
        out[s] = LemmaReport(f"resolvent_{s}", lhs, rhs,
                             {"alpha": margin.alpha, "samples": len(values[s]), **extra})
    return out


def projector_norm_ceiling(R: float, D: float, C2: float, C3: float, C4: float,
                           width: float) -> float:
    """``C R^(D/2) + C'`` with ``C = 2 C2/(pi C4)`` and ``C' = width/(pi C3)``."""
    return 2.0 * C2 * R ** (D / 2.0) / (math.pi * C4) + width / (math.pi * C3)


def norm_P2alpha_bound(P_norm: float, contour: Contour, sups: dict[str, float],
                       C4: float | None = None) -> LemmaReport:
    """``||P(2a)|| <= (y0/pi)(sup_right + sup_left) + (width/2pi)(sup_top + sup_bottom)``.

    ``sups`` are the sampled side maxima of ``||(H' - z)^{-1}||``. With ``C4``
    the constants also include the ceiling assembled from the lemma bounds.
    """
    rhs = (contour.y0 / math.pi * (sups["right"] + sups["left"])
           + contour.width / (2 * math.pi) * (sups["top"] + sups["bottom"]))
    const = {**contour.to_dict(), **{f"sup_{k}": float(v) for k, v in sups.items()}}
    if C4 is not None and C4 > 0 and contour.C3 > 0:
        const["ceiling"] = (contour.y0 / math.pi * 2.0 / C4
                            + contour.width / (2 * math.pi) * 2.0 / contour.C3)
    return LemmaReport("projector_norm", float(P_norm), float(rhs), const)
