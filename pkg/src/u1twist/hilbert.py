"""U(1) sector bases and embedded local operators.

Spin configurations are stored as local indices ``k = m + S`` in
``0..2S`` and encoded as base-``(2S+1)`` integers with site 0 as the most
significant digit, so ascending codes are lexicographic order in the local
quantum numbers. Fermion states are occupation bitstrings over modes
``2*site + spin`` (spin 0 = up, 1 = down), again most-significant first.

Operators are plain ``scipy.sparse.csr_matrix`` objects (complex) mapping a
source basis to a target basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "SectorError",
    "SpinSectorBasis",
    "FermionSectorBasis",
    "enumerate_spin_sector",
    "enumerate_fermion_sector",
    "embed_spin_operator",
    "embed_fermion_operator",
    "fermion_product",
    "hermiticity_defect",
    "is_hermitian",
    "local_spin_matrices",
    "UP",
    "DOWN",
]

UP, DOWN = 0, 1


class SectorError(ValueError):
    """Inconsistent quantum number or operator/sector mismatch."""


def _half_integer(x) -> Fraction:
    f = Fraction(x).limit_denominator(2)
    if f.denominator not in (1, 2) or abs(float(f) - float(x)) > 1e-12:
        raise SectorError(f"{x} is not an integer or half-integer")
    return f


def _compositions(n: int, total: int, cap: int) -> Iterator[tuple[int, ...]]:
    # lexicographic tuples of n digits in 0..cap summing to total
    if n == 0:
        if total == 0:
            yield ()
        return
    lo = max(0, total - cap * (n - 1))
    hi = min(cap, total)
    for k in range(lo, hi + 1):
        for rest in _compositions(n - 1, total - k, cap):
            yield (k,) + rest


# ----------------------------------------------------------------------------
# spin sectors
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class SpinSectorBasis:
    """Configurations of ``n_sites`` spin-``S`` with total ``S^z = M``."""

    spin: Fraction
    n_sites: int
    M: Fraction
    states: np.ndarray = field(repr=False)  # (dim, n_sites) local indices k = m + S
    codes: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.codes)

    @property
    def base(self) -> int:
        return int(2 * self.spin) + 1

    @cached_property
    def mz(self) -> np.ndarray:
        """Local ``S^z`` eigenvalues, shape ``(dim, n_sites)``."""
        return self.states.astype(float) - float(self.spin)

    def index(self, codes: np.ndarray) -> np.ndarray:
        """Row indices of encoded configurations (must all be present)."""
        idx = np.searchsorted(self.codes, codes)
        idx = np.minimum(idx, self.dim - 1)
        if np.any(self.codes[idx] != codes):
            raise SectorError("configuration outside the sector")
        return idx

    def shifted(self, dM: int) -> "SpinSectorBasis":
        return enumerate_spin_sector(self.spin, self.n_sites, self.M + dM)

    def label(self, row: int) -> str:
        if self.spin == Fraction(1, 2):
            return "".join("u" if k else "d" for k in self.states[row])
        return " ".join(str(float(k) - float(self.spin)) for k in self.states[row])


def enumerate_spin_sector(S, n_sites: int, M) -> SpinSectorBasis:
    """All configurations with ``sum_i m_i = M``, lexicographically ordered."""
    S = _half_integer(S)
    M = _half_integer(M)
    if S <= 0:
        raise SectorError("spin must be positive")
    if n_sites < 1:
        raise SectorError("need at least one site")
    if abs(M) > S * n_sites:
        raise SectorError(f"|M| = {abs(M)} exceeds S*sites = {S * n_sites}")
    if (2 * M - 2 * S * n_sites) % 2 != 0:
        raise SectorError(f"M = {M} inconsistent with {n_sites} spin-{S} sites")
    base = int(2 * S) + 1
    if n_sites * np.log2(base) >= 62:
        raise SectorError("configuration codes would overflow int64")
    total = int(M + S * n_sites)
    states = np.array(list(_compositions(n_sites, total, base - 1)), dtype=np.int64)
    states = states.reshape(-1, n_sites)
    weights = base ** np.arange(n_sites - 1, -1, -1, dtype=np.int64)
    codes = states @ weights
    return SpinSectorBasis(S, n_sites, M, states, codes)


def local_spin_matrices(S) -> dict[str, np.ndarray]:
    """Single-site ``S^z, S^+, S^-`` in the basis ``m = -S..S`` (k order)."""
    S = float(_half_integer(S))
    m = np.arange(-S, S + 0.5, 1.0)
    d = len(m)
    sp_ = np.zeros((d, d))
    for k in range(d - 1):
        sp_[k + 1, k] = np.sqrt(S * (S + 1) - m[k] * (m[k] + 1))
    return {"Sz": np.diag(m), "S+": sp_, "S-": sp_.T.copy()}


def _ladder(S: float, m: np.ndarray, up: bool) -> np.ndarray:
    return np.sqrt(S * (S + 1) - m * (m + 1)) if up else np.sqrt(S * (S + 1) - m * (m - 1))


_KIND_DM = {"Sz": 0, "S+": 1, "S-": -1, "S+S-": 0, "S-S+": 0, "SzSz": 0,
            "S+S+": 2, "S-S-": -2}


def embed_spin_operator(basis: SpinSectorBasis, kind: str, i: int, j: int | None = None,
                        target: SpinSectorBasis | None = None) -> sp.csr_matrix:
    """Matrix of a one- or two-site spin operator on a sector.

    ``kind`` is one of ``Sz, S+, S-`` (site ``i``) or ``S+S-, S-S+, SzSz,
    S+S+, S-S-`` (first factor on ``i``, second on ``j``). The result maps
    ``basis`` to ``target``, which defaults to the sector ``M + dM``.
    """
    if kind not in _KIND_DM:
        raise SectorError(f"unknown spin operator {kind!r}")
    n = basis.n_sites
    two_site = len(kind) > 3
    if not 0 <= i < n or (two_site and (j is None or not 0 <= j < n)):
        raise SectorError(f"site out of range for {kind}")
    if two_site and i == j and kind != "SzSz":
        raise SectorError("use distinct sites for two-site ladder products")
    dM = _KIND_DM[kind]
    if target is None:
        try:
            target = basis.shifted(dM) if dM else basis
        except SectorError as exc:
            raise SectorError(f"target sector M={basis.M + dM} is invalid") from exc
    elif target.M != basis.M + dM or target.n_sites != n or target.spin != basis.spin:
        raise SectorError("target sector does not match the operator")

    S = float(basis.spin)
    b = basis.base
    mz = basis.mz
    rows_src = np.arange(basis.dim)
    coef = np.ones(basis.dim)
    shift = np.zeros(basis.dim, dtype=np.int64)
    factors = [(kind[:2], i)] if not two_site else [(kind[:2], i), (kind[2:], j)]
    if kind == "SzSz":
        coef = mz[:, i] * mz[:, j]
        return sp.csr_matrix((coef.astype(complex), (rows_src, rows_src)),
                             shape=(target.dim, basis.dim))
    if kind == "Sz":
        return sp.csr_matrix((mz[:, i].astype(complex), (rows_src, rows_src)),
                             shape=(target.dim, basis.dim))
    # apply the right factor first; for distinct sites the factors commute
    m_now = mz.copy()
    keep = np.ones(basis.dim, dtype=bool)
    for op, site in reversed(factors):
        up = op == "S+"
        m_site = m_now[:, site]
        keep &= (m_site < S - 0.25) if up else (m_site > -S + 0.25)
        coef = coef * _ladder(S, m_site, up)
        step = 1 if up else -1
        m_now[:, site] = m_site + step
        shift += step * b ** (n - 1 - site)
    src = rows_src[keep]
    dst = target.index(basis.codes[keep] + shift[keep])
    return sp.csr_matrix((coef[keep].astype(complex), (dst, src)), shape=(target.dim, basis.dim))


# ----------------------------------------------------------------------------
# fermion sectors
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class FermionSectorBasis:
    """Occupation states of ``2 * n_sites`` modes with ``N`` particles.

    If ``sz`` is given the states are further restricted to
    ``N_up - N_down = sz``.
    """

    n_sites: int
    N: int
    sz: int | None
    occ: np.ndarray = field(repr=False)  # (dim, n_modes) 0/1
    codes: np.ndarray = field(repr=False)

    @property
    def n_modes(self) -> int:
        return 2 * self.n_sites

    @property
    def dim(self) -> int:
        return len(self.codes)

    @staticmethod
    def mode(site: int, spin: int) -> int:
        return 2 * site + spin

    def index(self, codes: np.ndarray) -> np.ndarray:
        idx = np.minimum(np.searchsorted(self.codes, codes), self.dim - 1)
        if np.any(self.codes[idx] != codes):
            raise SectorError("state outside the sector")
        return idx

    def with_particles(self, N: int, sz: int | None = None) -> "FermionSectorBasis":
        return enumerate_fermion_sector(self.n_sites, N, sz)


def enumerate_fermion_sector(n_sites: int, N: int, sz: int | None = None) -> FermionSectorBasis:
    n_modes = 2 * n_sites
    if not 0 <= N <= n_modes:
        raise SectorError(f"N = {N} outside 0..{n_modes}")
    if n_modes >= 62:
        raise SectorError("too many modes for int64 codes")
    occ = np.array(list(_compositions(n_modes, N, 1)), dtype=np.int8).reshape(-1, n_modes)
    if sz is not None:
        diff = occ[:, 0::2].sum(axis=1) - occ[:, 1::2].sum(axis=1)
        occ = occ[diff == sz]
        if len(occ) == 0:
            raise SectorError(f"no states with N={N}, sz={sz}")
    weights = (1 << np.arange(n_modes - 1, -1, -1, dtype=np.int64))
    codes = occ.astype(np.int64) @ weights
    return FermionSectorBasis(n_sites, N, sz, occ, codes)


def fermion_product(basis: FermionSectorBasis, ops: Sequence[tuple[int, bool]],
                    target: FermionSectorBasis | None = None) -> sp.csr_matrix:
    """Matrix of a product of ladder operators, written left to right.

    ``ops = [(mode, dagger), ...]`` represents ``o_1 o_2 ... o_k``; the
    rightmost factor acts first. Signs follow the Jordan-Wigner string over
    lower-numbered modes.
    """
    occ = basis.occ.astype(np.int64).copy()
    coef = np.ones(basis.dim)
    keep = np.ones(basis.dim, dtype=bool)
    dN = 0
    dsz = 0
    for mode, dagger in reversed(list(ops)):
        if not 0 <= mode < basis.n_modes:
            raise SectorError(f"mode {mode} out of range")
        n_here = occ[:, mode]
        keep &= (n_here == 0) if dagger else (n_here == 1)
        parity = occ[:, :mode].sum(axis=1) % 2
        coef = coef * np.where(parity == 1, -1.0, 1.0)
        occ[:, mode] = 1 - n_here
        step = 1 if dagger else -1
        dN += step
        dsz += step if mode % 2 == UP else -step
    if target is None:
        new_sz = None if basis.sz is None else basis.sz + dsz
        target = basis.with_particles(basis.N + dN, new_sz) if (dN or dsz) else basis
    elif target.N != basis.N + dN:
        raise SectorError("target sector does not match the operator")
    src = np.flatnonzero(keep)
    if src.size == 0:
        return sp.csr_matrix((target.dim, basis.dim), dtype=complex)
    weights = (1 << np.arange(basis.n_modes - 1, -1, -1, dtype=np.int64))
    dst = target.index(occ[src] @ weights)
    return sp.csr_matrix((coef[src].astype(complex), (dst, src)), shape=(target.dim, basis.dim))


def embed_fermion_operator(basis: FermionSectorBasis, mode: int, kind: str,
                           target: FermionSectorBasis | None = None) -> sp.csr_matrix:
    """``c``, ``c+`` (creation) or ``n`` on a single mode."""
    if kind == "c":
        return fermion_product(basis, [(mode, False)], target)
    if kind in ("c+", "cdag"):
        return fermion_product(basis, [(mode, True)], target)
    if kind == "n":
        return fermion_product(basis, [(mode, True), (mode, False)], target)
    raise SectorError(f"unknown fermion operator {kind!r}")


# ----------------------------------------------------------------------------
# checks
# ----------------------------------------------------------------------------

def hermiticity_defect(A) -> float:
    """``max |A - A^dagger|`` entrywise."""
    D = A - A.conj().T
    if sp.issparse(D):
        return float(abs(D).max()) if D.nnz else 0.0
    return float(np.abs(D).max()) if D.size else 0.0


def is_hermitian(A, tol: float = 1e-12) -> bool:
    return hermiticity_defect(A) <= tol
