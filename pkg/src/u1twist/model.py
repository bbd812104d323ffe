"""XXZ and Hubbard Hamiltonians on graph lattices.

XXZ: ``H = sum_b JXY_b (S+_i S-_j + S-_i S+_j) + JZ_b Sz_i Sz_j``, which is
the same operator as ``2 JXY (Sx Sx + Sy Sy) + JZ Sz Sz``.

Hubbard: ``H = -sum_b sum_mu (t c+_i c_j + t* c+_j c_i) + V({n}) + sum_i B_i . S_i``
with ``S^a_i = sum c+_mu sigma^a_{mu nu} c_nu`` (no factor 1/2).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping

import numpy as np
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
from .lattice import Lattice, distance_matrix

__all__ = [
    "ModelError",
    "XXZCouplings",
    "HubbardParams",
    "uniform_couplings",
    "random_couplings",
    "majumdar_ghosh_couplings",
    "assemble_xxz",
    "assemble_hubbard",
    "local_terms",
    "pair_norms",
    "local_term_bound",
    "total_sz",
    "total_number",
]

Bond = tuple[int, int]


class ModelError(ValueError):
    pass


def _key(b) -> Bond:
    i, j = int(b[0]), int(b[1])
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class XXZCouplings:
    """Per-bond couplings; the maxima are recomputed from the data."""

    jxy: Mapping[Bond, float]
    jz: Mapping[Bond, float]

    def __post_init__(self):
        object.__setattr__(self, "jxy", {_key(b): float(v) for b, v in self.jxy.items()})
        object.__setattr__(self, "jz", {_key(b): float(v) for b, v in self.jz.items()})

    @property
    def jxy_max(self) -> float:
        return max((abs(v) for v in self.jxy.values()), default=0.0)

    @property
    def jz_max(self) -> float:
        return max((abs(v) for v in self.jz.values()), default=0.0)

    def check(self, lat: Lattice) -> None:
        for b in lat.bonds:
            if b not in self.jxy or b not in self.jz:
                raise ModelError(f"missing coupling on bond {b}")


def uniform_couplings(lat: Lattice, jxy: float, jz: float) -> XXZCouplings:
    return XXZCouplings({b: jxy for b in lat.bonds}, {b: jz for b in lat.bonds})


def random_couplings(lat: Lattice, jxy_max: float, jz_max: float, seed: int) -> XXZCouplings:
    """Couplings drawn uniformly from ``[-J_max, J_max]`` (seeded)."""
    rng = np.random.default_rng(seed)
    jxy = rng.uniform(-jxy_max, jxy_max, size=lat.n_bonds)
    jz = rng.uniform(-jz_max, jz_max, size=lat.n_bonds)
    return XXZCouplings(dict(zip(lat.bonds, jxy)), dict(zip(lat.bonds, jz)))


def majumdar_ghosh_couplings(lat: Lattice, j1: float = 1.0) -> XXZCouplings:
    """Isotropic J1-J2 couplings with ``J2 = J1/2`` on a next-nearest chain.

    Heisenberg ``J S.S`` corresponds to ``JXY = J/2, JZ = J``.
    """
    n = lat.n_sites
    jxy, jz = {}, {}
    for i, j in lat.bonds:
        d = min(j - i, n - (j - i))
        J = j1 if d == 1 else 0.5 * j1
        jxy[(i, j)] = 0.5 * J
        jz[(i, j)] = J
    return XXZCouplings(jxy, jz)


def _bond_term(basis: SpinSectorBasis, i: int, j: int, jxy: float, jz: float) -> sp.csr_matrix:
    h = jz * embed_spin_operator(basis, "SzSz", i, j)
    if jxy != 0.0:
        h = h + jxy * (embed_spin_operator(basis, "S+S-", i, j)
                       + embed_spin_operator(basis, "S-S+", i, j))
    return h.tocsr()


def assemble_xxz(lat: Lattice, couplings: XXZCouplings, basis: SpinSectorBasis) -> sp.csr_matrix:
    """Sector-restricted XXZ Hamiltonian (hermitian, complex CSR)."""
    if basis.n_sites != lat.n_sites:
        raise ModelError("basis and lattice sizes differ")
    couplings.check(lat)
    H = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    for i, j in lat.bonds:
        H = H + _bond_term(basis, i, j, couplings.jxy[(i, j)], couplings.jz[(i, j)])
    H.sum_duplicates()
    return H.tocsr()


def local_terms(lat: Lattice, couplings: XXZCouplings,
                basis: SpinSectorBasis) -> dict[Bond, sp.csr_matrix]:
    """``h_{u,v}`` for every bond; they sum to :func:`assemble_xxz`."""
    couplings.check(lat)
    return {b: _bond_term(basis, *b, couplings.jxy[b], couplings.jz[b]) for b in lat.bonds}


@lru_cache(maxsize=None)
def _pair_norms(two_s: int) -> dict[str, float]:
    loc = local_spin_matrices(two_s / 2)
    Sp, Sm, Sz = loc["S+"], loc["S-"], loc["Sz"]
    pm = np.kron(Sp, Sm)
    mp = np.kron(Sm, Sp)
    return {
        "sym": float(np.linalg.norm(pm + mp, 2)),   # ||S+S- + S-S+||
        "anti": float(np.linalg.norm(pm - mp, 2)),  # ||S+S- - S-S+||
        "pm": float(np.linalg.norm(pm, 2)),         # ||S+ S-||
        "zz": float(np.linalg.norm(np.kron(Sz, Sz), 2)),
    }


def pair_norms(S) -> dict[str, float]:
    """Exact operator norms of the two-site building blocks for spin ``S``."""
    return dict(_pair_norms(int(round(2 * float(S)))))


def local_term_bound(S, jxy_max: float, jz_max: float) -> float:
    """Triangle-inequality ceiling ``JXY_max ||S+S- + S-S+|| + JZ_max S^2``."""
    norms = pair_norms(S)
    return jxy_max * norms["sym"] + jz_max * norms["zz"]


def total_sz(basis: SpinSectorBasis) -> sp.csr_matrix:
    return sp.diags(basis.mz.sum(axis=1).astype(complex), format="csr")


# ----------------------------------------------------------------------------
# Hubbard
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class HubbardParams:
    """Hopping, finite-range density interaction and local fields.

    The interaction preset is ``U sum_i n_up n_down + V_nn sum_b n_i n_j``;
    its range (0 or 1) must not exceed ``max_range``.
    """

    t: Mapping[Bond, complex]
    U: float = 0.0
    V_nn: float = 0.0
    B: np.ndarray | None = field(default=None, repr=False)
    max_range: int = 1

    def __post_init__(self):
        object.__setattr__(self, "t", {_key(b): complex(v) for b, v in self.t.items()})
        if self.B is not None:
            object.__setattr__(self, "B", np.asarray(self.B, dtype=float).reshape(-1, 3))

    @property
    def interaction_range(self) -> int:
        return 1 if self.V_nn != 0.0 else 0

    @property
    def longitudinal_field(self) -> bool:
        return self.B is None or not np.any(self.B[:, :2])

    @classmethod
    def uniform(cls, lat: Lattice, t: complex, U: float = 0.0, V_nn: float = 0.0,
                B=None, max_range: int = 1) -> "HubbardParams":
        return cls({b: t for b in lat.bonds}, U, V_nn, B, max_range)


def assemble_hubbard(lat: Lattice, params: HubbardParams,
                     basis: FermionSectorBasis) -> sp.csr_matrix:
    if basis.n_sites != lat.n_sites:
        raise ModelError("basis and lattice sizes differ")
    if params.interaction_range > params.max_range:
        raise ModelError(f"interaction range {params.interaction_range} exceeds "
                         f"configured radius {params.max_range}")
    for b in lat.bonds:
        if b not in params.t:
            raise ModelError(f"missing hopping on bond {b}")
    mode = FermionSectorBasis.mode
    occ = basis.occ.astype(float)
    n_up, n_dn = occ[:, 0::2], occ[:, 1::2]
    diag = params.U * (n_up * n_dn).sum(axis=1)
    if params.V_nn:
        dens = n_up + n_dn
        dmat = distance_matrix(lat)
        assert all(dmat[i, j] == 1 for i, j in lat.bonds)
        for i, j in lat.bonds:
            diag = diag + params.V_nn * dens[:, i] * dens[:, j]
    H = sp.diags(diag.astype(complex), format="csr")
    for i, j in lat.bonds:
        t = params.t[(i, j)]
        for mu in (UP, DOWN):
            hop = fermion_product(basis, [(mode(i, mu), True), (mode(j, mu), False)], basis)
            H = H - t * hop - np.conj(t) * hop.conj().T
    if params.B is not None:
        if params.B.shape[0] != lat.n_sites:
            raise ModelError("field array must have one row per site")
        if not params.longitudinal_field and basis.sz is not None:
            raise SectorError("transverse field does not conserve S^z; use sz=None")
        for i in lat.sites:
            bx, by, bz = params.B[i]
            if bz:
                H = H + bz * sp.diags((n_up[:, i] - n_dn[:, i]).astype(complex), format="csr")
            if bx or by:
                ud = fermion_product(basis, [(mode(i, UP), True), (mode(i, DOWN), False)], basis)
                # bx sigma^x + by sigma^y has (up, down) entry bx - i by
                H = H + (bx - 1j * by) * ud + (bx + 1j * by) * ud.conj().T
    H.sum_duplicates()
    return H.tocsr()


def total_number(basis: FermionSectorBasis) -> sp.csr_matrix:
    return sp.diags(basis.occ.sum(axis=1).astype(complex), format="csr")
