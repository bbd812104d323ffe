"""Imaginary U(1) twist: profile, gauge transform, K and L, and their norm bounds.

The gauge transform is ``G(a) = prod_i exp(-a theta_i S^z_i)``. The sign is
chosen so that ``G(a)^{-1} S^+-_i G(a) = exp(+-a theta_i) S^+-_i``; then
``G(2a)^{-1} H G(2a) = H + K + iL`` with hermitian ``K`` and ``L`` supported
on the bonds where ``theta`` changes, and
``Tr S+_m S-_n P = exp(a (theta_m - theta_n)) Tr S+_m S-_n G(a)^{-1} P G(a)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .hilbert import FermionSectorBasis, SpinSectorBasis, embed_spin_operator
from .lattice import DistanceField, Lattice, distances_from
from .linalg import operator_norm
from .model import XXZCouplings, local_term_bound, pair_norms

__all__ = [
    "TwistError",
    "TwistOverflowError",
    "TwistProfile",
    "TwistOperators",
    "LemmaReport",
    "kappa_window",
    "default_kappa",
    "annulus_bonds",
    "build_theta",
    "null_profile",
    "twist_profile",
    "gauge_log_diagonal",
    "build_G",
    "build_G_fermion",
    "build_KL",
    "double_commutator",
    "double_commutator_constant",
    "lemma_K_rhs",
    "lemma_L_rhs",
    "lemma_double_rhs",
    "check_lemma_K",
    "check_lemma_L",
    "check_lemma_double",
    "minimal_c1",
]

OVERFLOW_EXPONENT = 600.0
# relative rounding allowance when comparing a computed norm with its ceiling;
# several ceilings are attained exactly (e.g. resolvents at L = 0)
ROUNDING = 1e-12


class TwistError(ValueError):
    pass


class TwistOverflowError(TwistError, OverflowError):
    pass


def kappa_window(D: float) -> tuple[float, float]:
    """Open interval ``(1 - D/2, 3/2 - D/2)`` of admissible exponents."""
    return 1.0 - D / 2.0, 1.5 - D / 2.0


def default_kappa(D: float) -> float:
    return 1.25 - D / 2.0


@dataclass(frozen=True)
class TwistProfile:
    m: int
    n: int | None
    R: int
    kappa: float
    D: float
    theta: np.ndarray = field(repr=False)
    dist: np.ndarray = field(repr=False)

    @property
    def theta_m(self) -> float:
        return float(self.theta[self.m])

    def phase_gap(self, i: int, j: int) -> float:
        """``theta_i - theta_j``."""
        return float(self.theta[i] - self.theta[j])


def build_theta(distfield: DistanceField, R: int, kappa: float, D: float,
                n: int | None = None) -> TwistProfile:
    """Profile ``theta_l = R^(1-D/2) [(d_l/R)^kappa - 1]`` inside radius ``R``.

    At the centre ``theta_m = R^(1-D/2) (R^-kappa - 1)``; beyond ``R`` it
    vanishes.
    """
    lo, hi = kappa_window(D)
    if not lo < kappa < hi:
        raise TwistError(f"kappa={kappa} outside the open window ({lo:.6g}, {hi:.6g})")
    if R < 2:
        raise TwistError(f"R must be >= 2, got {R}")
    d = np.asarray(distfield.dist, dtype=float)
    amp = R ** (1.0 - D / 2.0)
    theta = np.where(d <= R, amp * ((d / R) ** kappa - 1.0), 0.0)
    theta[distfield.center] = amp * (R ** (-kappa) - 1.0)
    theta.setflags(write=False)
    return TwistProfile(distfield.center, n, int(R), float(kappa), float(D), theta,
                        np.asarray(distfield.dist))


def null_profile(distfield: DistanceField, R: int, kappa: float, D: float,
                 n: int | None = None) -> TwistProfile:
    """Identically zero profile for a pair closer than 2 (empty annulus)."""
    theta = np.zeros(len(distfield.dist))
    theta.setflags(write=False)
    return TwistProfile(distfield.center, n, int(R), float(kappa), float(D), theta,
                        np.asarray(distfield.dist))


def twist_profile(lat: Lattice, m: int, n: int, D: float, kappa: float | None = None) -> TwistProfile:
    """Profile for the pair ``(m, n)``, with ``R = dist(m, n)``."""
    df = distances_from(lat, m)
    R = int(df.dist[n])
    return build_theta(df, R, default_kappa(D) if kappa is None else kappa, D, n=n)


def annulus_bonds(lat: Lattice, profile: TwistProfile) -> list[tuple[int, int]]:
    """Bonds ``{i, j}`` with ``1 <= d_i <= R-1`` and ``d_j >= d_i``, as ``(i, j)``.

    The inner endpoint comes first.
    """
    d, R = profile.dist, profile.R
    out = []
    for a, b in lat.bonds:
        i, j = (a, b) if d[a] <= d[b] else (b, a)
        if 1 <= d[i] <= R - 1:
            out.append((i, j))
    return out


def gauge_log_diagonal(basis: SpinSectorBasis, theta: np.ndarray, alpha: float) -> np.ndarray:
    """``-alpha * sum_i theta_i m_i`` for every configuration."""
    return -alpha * (basis.mz @ np.asarray(theta, dtype=float))


def _diag_from_log(phi: np.ndarray) -> sp.csr_matrix:
    if phi.size and np.abs(phi).max() > OVERFLOW_EXPONENT:
        raise TwistOverflowError(f"gauge exponent {np.abs(phi).max():.1f} exceeds {OVERFLOW_EXPONENT}")
    return sp.diags(np.exp(phi).astype(complex), format="csr")


def build_G(basis: SpinSectorBasis, theta: np.ndarray, alpha: float) -> sp.csr_matrix:
    """Diagonal ``G(alpha) = prod_i exp(-alpha theta_i S^z_i)`` on the sector."""
    if len(theta) != basis.n_sites:
        raise TwistError("theta must be defined on every site")
    return _diag_from_log(gauge_log_diagonal(basis, theta, alpha))


def build_G_fermion(basis: FermionSectorBasis, theta: np.ndarray, alpha: float) -> sp.csr_matrix:
    """Charge twist ``exp(-alpha sum_i theta_i n_i)`` with ``n_i = n_up + n_down``.

    Same sign convention as :func:`build_G`:
    ``G^{-1} c+_m c_n G = exp(alpha (theta_m - theta_n)) c+_m c_n``.
    """
    if len(theta) != basis.n_sites:
        raise TwistError("theta must be defined on every site")
    occ = basis.occ.astype(float)
    dens = occ[:, 0::2] + occ[:, 1::2]
    return _diag_from_log(-alpha * (dens @ np.asarray(theta, dtype=float)))


@dataclass
class TwistOperators:
    alpha: float
    G: sp.csr_matrix = field(repr=False)
    K: sp.csr_matrix = field(repr=False)
    L: sp.csr_matrix = field(repr=False)
    A_bonds: list[tuple[int, int]] = field(repr=False)

    def hprime(self, H) -> sp.csr_matrix:
        """``H + K + iL``."""
        return (H + self.K + 1j * self.L).tocsr()


def build_KL(lat: Lattice, couplings: XXZCouplings, profile: TwistProfile, alpha: float,
             basis: SpinSectorBasis) -> TwistOperators:
    """``K`` and ``L`` summed over the annulus bonds at twist ``2 alpha``."""
    bonds = annulus_bonds(lat, profile)
    dim = basis.dim
    K = sp.csr_matrix((dim, dim), dtype=complex)
    L = sp.csr_matrix((dim, dim), dtype=complex)
    for i, j in bonds:
        x = 2.0 * alpha * profile.phase_gap(i, j)
        if x == 0.0:
            continue
        J = couplings.jxy[(min(i, j), max(i, j))]
        pm = embed_spin_operator(basis, "S+S-", i, j)
        mp = embed_spin_operator(basis, "S-S+", i, j)
        K = K + (J * (math.cosh(x) - 1.0)) * (pm + mp)
        L = L + (-1j * J * math.sinh(x)) * (pm - mp)
    G = build_G(basis, profile.theta, alpha)
    return TwistOperators(alpha, G, K.tocsr(), L.tocsr(), bonds)


def double_commutator(H, L):
    """``[L, [H, L]]``."""
    if H.shape != L.shape:
        raise TwistError(f"dimension mismatch {H.shape} vs {L.shape}")
    C = H @ L - L @ H
    return L @ C - C @ L


# ----------------------------------------------------------------------------
# lemma bounds
# ----------------------------------------------------------------------------

@dataclass
class LemmaReport:
    name: str
    lhs: float
    rhs: float
    constants: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.margin >= -ROUNDING * max(abs(self.rhs), abs(self.lhs))

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "margin": self.margin,
                "passed": self.passed, "constants": dict(self.constants)}


def _sum_ratio(kappa: float, D: float) -> float:
    return (2 * kappa + D - 1) / (2 * kappa + D - 2)


def lemma_K_rhs(alpha, kappa, D, C0, jxy_max, pair_sym) -> float:
    return jxy_max * pair_sym * C0 ** 2 * (math.cosh(2 * alpha) - 1.0) * _sum_ratio(kappa, D)


def lemma_L_rhs(alpha, kappa, D, C0, jxy_max, pair_anti, R) -> float:
    return (jxy_max * pair_anti * C0 ** 2 * abs(math.sinh(2 * alpha))
            * (1.0 + R ** (D / 2.0) / (kappa + D - 1.0)))


def lemma_double_rhs(alpha, kappa, D, C1) -> float:
    return C1 * math.sinh(2 * alpha) ** 2 * _sum_ratio(kappa, D)


def double_commutator_constant(max_degree: int, C0: float, kappa: float, jxy_max: float,
                               jz_max: float, S) -> float:
    """An explicit alpha-, R- and volume-independent ``C1``.

    Each term ``[Y_b', [h_e, Y_b]]`` has norm ``<= 4 ||Y||^2 h_max``; for a
    fixed bond ``b`` at most ``2z`` bonds ``e`` touch it and ``3z`` bonds
    ``b'`` touch ``e u b``; the weight of ``b'`` is within ``3^(1-kappa)`` of
    the weight of ``b``; the shell sum contributes ``z C0`` times the same
    ratio as for ``K``. Here ``z`` is the maximal degree.
    """
    y = pair_norms(S)["anti"]
    h_max = local_term_bound(S, jxy_max, jz_max)
    z = float(max_degree)
    return 24.0 * z ** 3 * C0 * 3.0 ** (1.0 - kappa) * jxy_max ** 2 * y ** 2 * h_max


def minimal_c1(lhs: float, alpha: float, kappa: float, D: float) -> float:
    """Smallest ``C1`` for which the double-commutator bound holds at ``alpha``."""
    s = math.sinh(2 * alpha) ** 2
    if s == 0.0:
        return 0.0
    return lhs / (s * _sum_ratio(kappa, D))


def _common(profile: TwistProfile, alpha: float, C0: float) -> dict:
    return {"alpha": alpha, "kappa": profile.kappa, "D": profile.D, "R": profile.R, "C0": C0}


def check_lemma_K(ops: TwistOperators, profile: TwistProfile, couplings: XXZCouplings,
                  C0: float, S, K_norm: float | None = None) -> LemmaReport:
    norms = pair_norms(S)
    lhs = operator_norm(ops.K, hermitian=True) if K_norm is None else K_norm
    rhs = lemma_K_rhs(ops.alpha, profile.kappa, profile.D, C0, couplings.jxy_max, norms["sym"])
    return LemmaReport("K", lhs, rhs, {**_common(profile, ops.alpha, C0),
                                       "JXY_max": couplings.jxy_max, "pair_norm": norms["sym"]})


def check_lemma_L(ops: TwistOperators, profile: TwistProfile, couplings: XXZCouplings,
                  C0: float, S, L_norm: float | None = None) -> LemmaReport:
    norms = pair_norms(S)
    lhs = operator_norm(ops.L, hermitian=True) if L_norm is None else L_norm
    rhs = lemma_L_rhs(ops.alpha, profile.kappa, profile.D, C0, couplings.jxy_max,
                      norms["anti"], profile.R)
    return LemmaReport("L", lhs, rhs, {**_common(profile, ops.alpha, C0),
                                       "JXY_max": couplings.jxy_max, "pair_norm": norms["anti"]})


def check_lemma_double(H, ops: TwistOperators, profile: TwistProfile, C0: float,
                       C1: float, dc_norm: float | None = None) -> LemmaReport:
    """Double-commutator bound with a supplied ``C1``.

    The report also carries ``C1_min``, the smallest constant that would
    make this instance pass.
    """
    if dc_norm is None:
        dc_norm = operator_norm(double_commutator(H, ops.L), hermitian=True)
    rhs = lemma_double_rhs(ops.alpha, profile.kappa, profile.D, C1)
    return LemmaReport("double_commutator", dc_norm, rhs,
                       {**_common(profile, ops.alpha, C0), "C1": C1,
                        "C1_min": minimal_c1(dc_norm, ops.alpha, profile.kappa, profile.D)})
