"""Ground-sector correlations, the twisted bound chain and decay fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.optimize as so
import scipy.sparse as sp

from .hilbert import (
    DOWN,
    UP,
    FermionSectorBasis,
    SectorError,
    SpinSectorBasis,
    embed_spin_operator,
    fermion_product,
    local_spin_matrices,
)
from .model import pair_norms
from .spectral import GroundProjector
from .twist import ROUNDING, TwistProfile

__all__ = [
    "DecayError",
    "CorrelationRecord",
    "BoundChainReport",
    "DecayFit",
    "spin_pair_norm",
    "fermion_operator_norm",
    "transverse_correlation",
    "fermion_correlations",
    "odd_expectation",
    "twisted_trace",
    "verify_bound_chain",
    "theorem_bound",
    "fit_decay",
    "ZERO_CUTOFF",
]

ZERO_CUTOFF = 1e-12


class DecayError(ValueError):
    pass


@dataclass(frozen=True)
class CorrelationRecord:
    m: int
    n: int
    R: int
    value: complex
    norm: float
    kind: str = "S+S-"

    @property
    def abs(self) -> float:
        return abs(self.value)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "m": self.m, "n": self.n, "R": self.R,
                "re": self.value.real, "im": self.value.imag, "abs": self.abs,
                "norm": self.norm}


# ----------------------------------------------------------------------------
# operator norms
# ----------------------------------------------------------------------------

def spin_pair_norm(S, same_site: bool = False) -> float:
    """``||S+_m S-_n||``; on one site this is ``||S+ S-||`` of the local matrices."""
    if not same_site:
        return pair_norms(S)["pm"]
    loc = local_spin_matrices(S)
    return float(np.linalg.norm(loc["S+"] @ loc["S-"], 2))


@lru_cache(maxsize=None)
def _jw_modes(n_modes: int) -> tuple[np.ndarray, ...]:
    a = np.array([[0.0, 1.0], [0.0, 0.0]])  # annihilates |1> -> |0> in (|0>, |1>) order
    z = np.diag([1.0, -1.0])
    eye = np.eye(2)
    out = []
    for k in range(n_modes):
        mats = [z] * k + [a] + [eye] * (n_modes - k - 1)
        op = mats[0]
        for mtx in mats[1:]:
            op = np.kron(op, mtx)
        out.append(op)
    return tuple(out)


def fermion_operator_norm(ops) -> float:
    """Operator norm of a product of ladder operators on the full Fock space.

    Only the modes that appear matter, so the product is rebuilt on a small
    Fock space with explicit Jordan-Wigner matrices.
    """
    modes = sorted({mode for mode, _ in ops})
    local = {m: k for k, m in enumerate(modes)}
    c = _jw_modes(len(modes))
    prod = np.eye(2 ** len(modes))
    for mode, dagger in ops:
        cm = c[local[mode]]
        prod = prod @ (cm.T if dagger else cm)
    return float(np.linalg.norm(prod, 2))


# ----------------------------------------------------------------------------
# correlations
# ----------------------------------------------------------------------------

def _distance(dist, m, n) -> int:
    if dist is None:
        return abs(m - n)
    return int(np.asarray(dist)[m, n] if np.ndim(dist) == 2 else dist[n])


def transverse_correlation(P: GroundProjector, qM: int, m: int, n: int, basis: SpinSectorBasis,
                           dist=None) -> CorrelationRecord:
    """``Tr(S+_m S-_n P) / qM``.

    ``dist`` is either a distance matrix or the distance field from ``m``;
    without it ``|m - n|`` is used (open chains).
    """
    if P.rank != qM:
        raise DecayError(f"projector rank {P.rank} does not match q = {qM}")
    if m == n:
        # S+ S- = S(S+1) - Sz^2 + Sz on one site
        S = float(basis.spin)
        mz = basis.mz[:, m]
        A = sp.diags((S * (S + 1) - mz ** 2 + mz).astype(complex), format="csr")
        norm = spin_pair_norm(basis.spin, same_site=True)
    else:
        A = embed_spin_operator(basis, "S+S-", m, n)
        norm = spin_pair_norm(basis.spin)
    return CorrelationRecord(m, n, _distance(dist, m, n), P.trace_with(A) / qM, norm)


def odd_expectation(P: GroundProjector, basis: FermionSectorBasis, ops) -> complex:
    """``Tr(O P) / q`` for a product ``O`` that changes the particle number.

    ``O v`` is expanded on the Fock-space codes of its own sector and
    overlapped with ``v`` code by code; sectors of different ``N`` share no
    codes, so the result is an exact zero.
    """
    dN = sum(1 if dag else -1 for _, dag in ops)
    if dN == 0:
        raise DecayError("operator conserves the particle number")
    if not 0 <= basis.N + dN <= basis.n_modes:
        return 0j
    target = basis.with_particles(basis.N + dN)
    A = fermion_product(_as_unconstrained(basis), ops, target=target)
    V = np.asarray(P.vectors)
    if basis.sz is not None:
        full = _as_unconstrained(basis)
        V = _lift(V, basis, full)
        basis = full
    common, i_src, i_dst = np.intersect1d(basis.codes, target.codes, return_indices=True)
    AV = A @ V
    total = complex(np.einsum("ij,ij->", V[i_src].conj(), AV[i_dst])) if common.size else 0j
    return total / P.rank


def _as_unconstrained(basis: FermionSectorBasis) -> FermionSectorBasis:
    return basis if basis.sz is None else basis.with_particles(basis.N)


def _lift(V: np.ndarray, sub: FermionSectorBasis, full: FermionSectorBasis) -> np.ndarray:
    out = np.zeros((full.dim, V.shape[1]), dtype=complex)
    out[full.index(sub.codes)] = V
    return out


def fermion_correlations(P: GroundProjector, qN: int, m: int, n: int,
                         basis: FermionSectorBasis, *, longitudinal: bool = True,
                         spin: bool = True, dist=None) -> list[CorrelationRecord]:
    """Hopping, pair and transverse-spin correlations in a fixed-``N`` sector.

    With ``S+ = 2 c+_up c_down`` the spin correlation is only defined here
    for a longitudinal field; ``spin=True`` with ``longitudinal=False`` is
    rejected.
    """
    if P.rank != qN:
        raise DecayError(f"projector rank {P.rank} does not match q = {qN}")
    if spin and not longitudinal:
        raise DecayError("spin correlation needs a field along z")
    mode = FermionSectorBasis.mode
    R = _distance(dist, m, n)
    recs = []
    for mu, tag in ((UP, "up"), (DOWN, "down")):
        ops = [(mode(m, mu), True), (mode(n, mu), False)]
        recs.append(_fermion_record(P, qN, basis, ops, m, n, R, f"c+c_{tag}"))
    pair = [(mode(m, UP), True), (mode(m, DOWN), True), (mode(n, UP), False), (mode(n, DOWN), False)]
    recs.append(_fermion_record(P, qN, basis, pair, m, n, R, "pair"))
    if spin:
        ops = [(mode(m, UP), True), (mode(m, DOWN), False), (mode(n, DOWN), True), (mode(n, UP), False)]
        recs.append(_fermion_record(P, qN, basis, ops, m, n, R, "S+S-", scale=4.0))
    return recs


def _fermion_record(P, q, basis, ops, m, n, R, kind, scale=1.0) -> CorrelationRecord:
    try:
        A = fermion_product(basis, ops, target=basis)
    except SectorError as exc:
        raise DecayError(f"{kind} does not preserve the sector") from exc
    value = scale * P.trace_with(A) / q
    return CorrelationRecord(m, n, R, value, scale * fermion_operator_norm(ops), kind)


# ----------------------------------------------------------------------------
# bound chain
# ----------------------------------------------------------------------------

@dataclass
class BoundChainReport:
    alpha: float
    lhs: float
    rhs: float
    P_norm: float
    decay_factor: float
    gauge_defect: float | None = None
    constants: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.margin >= -ROUNDING * max(abs(self.rhs), abs(self.lhs))

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "lhs": self.lhs, "rhs": self.rhs, "margin": self.margin,
                "P_norm": self.P_norm, "decay_factor": self.decay_factor,
                "gauge_defect": self.gauge_defect, "passed": self.passed, **self.constants}


def twisted_trace(A, vectors: np.ndarray, g: np.ndarray) -> complex:
    """``Tr(A G^{-1} P G)`` for ``P = V V^dagger`` and positive diagonal ``g``."""
    V = np.asarray(vectors)
    left = V / g[:, None]
    right = V * g[:, None]
    return complex(np.einsum("ij,ij->", right.conj(), A @ left))


def verify_bound_chain(record: CorrelationRecord, P_norm: float, profile: TwistProfile,
                       alpha: float, *, qM: int | None = None, A=None,
                       vectors: np.ndarray | None = None, g_alpha: np.ndarray | None = None
                       ) -> BoundChainReport:
    """``|<S+_m S-_n>| <= ||S+ S-|| ||P(2a)|| exp(a (theta_m - theta_n))``.

    ``P_norm`` is ``||G(2a)^{-1} P G(2a)||``. When ``A``, the ground
    ``vectors`` and the diagonal of ``G(a)`` are supplied, the gauge identity
    ``exp(a (theta_m - theta_n)) Tr(A P(a)) = Tr(A P)`` is also checked and
    its absolute defect reported.
    """
    if profile.m != record.m or profile.R != record.R:
        raise DecayError("profile does not match the correlation pair")
    dtheta = profile.theta[record.m] - profile.theta[record.n]
    factor = math.exp(alpha * dtheta)
    rhs = record.norm * P_norm * factor
    defect = None
    if A is not None and vectors is not None and g_alpha is not None:
        q = vectors.shape[1] if qM is None else qM
        twisted = factor * twisted_trace(A, vectors, g_alpha) / q
        defect = abs(twisted - record.value)
    return BoundChainReport(alpha, record.abs, rhs, P_norm, factor, defect,
                            {"m": record.m, "n": record.n, "R": record.R,
                             "kappa": profile.kappa, "D": profile.D})


def theorem_bound(record: CorrelationRecord, alpha0: float, ceiling: float,
                  profile: TwistProfile) -> BoundChainReport:
    """Main bound with ``||P(2 a0)||`` replaced by its certified ceiling."""
    R, k, D = profile.R, profile.kappa, profile.D
    factor = math.exp(-alpha0 * (1.0 - R ** (-k)) * R ** (1.0 - D / 2.0))
    return BoundChainReport(alpha0, record.abs, record.norm * ceiling * factor, ceiling, factor,
                            None, {"m": record.m, "n": record.n, "R": R, "kappa": k, "D": D})


# ----------------------------------------------------------------------------
# fits
# ----------------------------------------------------------------------------

@dataclass
class DecayFit:
    gamma: float
    prefactor: float
    p_theory: float
    rms: float
    p_free: float
    gamma_free: float
    prefactor_free: float
    rms_free: float
    n_points: int
    distances: list[int] = field(default_factory=list)

    @property
    def at_least_as_fast(self) -> bool:
        """Decay is no slower than ``exp(-gamma R^p_theory)`` with ``gamma > 0``."""
        return self.gamma > 0.0 and self.p_free >= self.p_theory - 1e-9

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "prefactor": self.prefactor, "p_theory": self.p_theory,
                "rms": self.rms, "p_free": self.p_free, "gamma_free": self.gamma_free,
                "prefactor_free": self.prefactor_free, "rms_free": self.rms_free,
                "n_points": self.n_points, "distances": list(self.distances),
                "at_least_as_fast": self.at_least_as_fast}


def _linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """``y ~ c - gamma x``; returns ``(gamma, c, rms)``."""
    X = np.column_stack([np.ones_like(x), -x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    rms = float(np.sqrt(np.mean((X @ coef - y) ** 2)))
    return float(coef[1]), float(coef[0]), rms


def fit_decay(records, D: float, p_bounds: tuple[float, float] = (0.05, 4.0)) -> DecayFit:
    """Least squares of ``log|C|`` against ``R^(1 - D/2)``, plus a free-exponent fit.

    Records with ``R < 2`` or ``|C| <= 1e-12`` are dropped; at least four
    distinct distances must remain.
    """
    pts = [(r.R, r.abs) for r in records if r.R >= 2 and r.abs > ZERO_CUTOFF]
    dists = sorted({R for R, _ in pts})
    if len(dists) < 4:
        raise DecayError("insufficient data: need nonzero correlations at >= 4 distances")
    R = np.array([p[0] for p in pts], dtype=float)
    y = np.log([p[1] for p in pts])
    p0 = 1.0 - D / 2.0
    gamma, c, rms = _linear_fit(R ** p0, y)

    def loss(p):
        return _linear_fit(R ** p, y)[2]

    res = so.minimize_scalar(loss, bounds=p_bounds, method="bounded",
                             options={"xatol": 1e-10})
    pf = float(res.x)
    gf, cf, rf = _linear_fit(R ** pf, y)
    return DecayFit(gamma, math.exp(c), p0, rms, pf, gf, math.exp(cf), rf, len(pts), dists)
