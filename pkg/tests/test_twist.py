import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from u1twist.hilbert import (
    FermionSectorBasis,
    embed_spin_operator,
    enumerate_fermion_sector,
    enumerate_spin_sector,
    fermion_product,
)
from u1twist.lattice import SIERPINSKI_DIMENSION, build_chain, build_sierpinski, certify_dimension, distances_from, estimate_dimension
from u1twist.model import assemble_xxz, pair_norms, random_couplings, uniform_couplings
from u1twist.twist import (
    TwistError,
    TwistOverflowError,
    annulus_bonds,
    build_G,
    build_G_fermion,
    build_KL,
    build_theta,
    check_lemma_double,
    check_lemma_K,
    check_lemma_L,
    default_kappa,
    double_commutator,
    double_commutator_constant,
    kappa_window,
    lemma_double_rhs,
    lemma_L_rhs,
    minimal_c1,
    twist_profile,
)

mode = FermionSectorBasis.mode


def dense(A):
    return A.toarray()


def test_theta_centre_value():
    lat = build_chain(40)
    p = build_theta(distances_from(lat, 0), 16, 0.75, 1.0)
    assert p.theta_m == pytest.approx(-3.5, abs=1e-14)
    assert p.theta[16] == 0.0
    assert np.all(p.theta[17:] == 0.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 30), st.floats(0.0, 1.0), st.sampled_from([1.0, 1.3, SIERPINSKI_DIMENSION]))
def test_theta_invariants(R, frac, D):
    lo, hi = kappa_window(D)
    kappa = lo + (hi - lo) * (0.01 + 0.98 * frac)
    lat = build_chain(R + 5)
    p = build_theta(distances_from(lat, 0), R, kappa, D)
    t = p.theta
    assert np.all(np.diff(t[1:R + 1]) >= 0)
    assert t[R] == pytest.approx(0.0, abs=1e-12) and np.all(t[R + 1:] == 0)
    assert t[0] == pytest.approx(R ** (1 - D / 2) * (R ** -kappa - 1))
    for i, j in annulus_bonds(lat, p):
        r = p.dist[i]
        gap = abs(p.phase_gap(i, j))
        assert gap <= kappa * R ** (-kappa + 1 - D / 2) * r ** (kappa - 1) + 1e-12
        assert gap <= 1 + 1e-12


@pytest.mark.parametrize("kappa,R", [(0.5, 4), (1.0, 4), (0.75, 1)])
def test_theta_errors(kappa, R):
    with pytest.raises(TwistError):
        build_theta(distances_from(build_chain(6), 0), R, kappa, 1.0)


def test_default_kappa_midpoint():
    assert default_kappa(1.0) == 0.75
    lo, hi = kappa_window(1.5)
    assert default_kappa(1.5) == pytest.approx((lo + hi) / 2)


def test_annulus_chain_r3():
    lat = build_chain(6)
    p = build_theta(distances_from(lat, 0), 3, 0.75, 1.0)
    assert annulus_bonds(lat, p) == [(1, 2), (2, 3)]


def test_annulus_gasket_orientation():
    lat = build_sierpinski(2)
    p = twist_profile(lat, 0, int(np.argmax(distances_from(lat, 0).dist)), 1.5)
    for i, j in annulus_bonds(lat, p):
        assert 1 <= p.dist[i] <= p.R - 1 and p.dist[j] >= p.dist[i]


def test_G_single_spin():
    b = enumerate_spin_sector(0.5, 1, -0.5)
    b2 = enumerate_spin_sector(0.5, 1, 0.5)
    a = 0.7
    # local basis ordered m = -1/2, +1/2
    g = [dense(build_G(b, np.ones(1), a))[0, 0], dense(build_G(b2, np.ones(1), a))[0, 0]]
    assert np.allclose(g, [math.exp(a / 2), math.exp(-a / 2)])
    assert np.allclose(dense(build_G(b, np.ones(1), 0.0)), 1.0)


def test_G_conjugates_ladder_operators():
    lat = build_chain(5)
    theta = np.array([-1.2, -0.4, 0.3, 0.0, 0.8])
    a = 0.45
    b = enumerate_spin_sector(1, 5, 0)
    up = b.shifted(1)
    G, Gu = build_G(b, theta, a), build_G(up, theta, a)
    for i in lat.sites:
        Sp = embed_spin_operator(b, "S+", i)
        lhs = (1 / Gu.diagonal())[:, None] * dense(Sp) * G.diagonal()[None, :]
        assert np.allclose(lhs, math.exp(a * theta[i]) * dense(Sp), atol=1e-12)


def test_G_overflow_guard():
    b = enumerate_spin_sector(0.5, 4, 0)
    with pytest.raises(TwistOverflowError):
        build_G(b, np.array([1000.0, 1000.0, -1000.0, -1000.0]), 1.0)


def test_G_fermion_conjugates_hopping():
    b = enumerate_fermion_sector(3, 2)
    theta = np.array([-0.9, 0.2, 0.0])
    a = 0.6
    g = dense(build_G_fermion(b, theta, a)).diagonal()
    hop = dense(fermion_product(b, [(mode(0, 0), True), (mode(2, 0), False)], b))
    conj = (1 / g)[:, None] * hop * g[None, :]
    assert np.allclose(conj, math.exp(a * (theta[0] - theta[2])) * hop)


def conjugation_case(alpha, seed=None, n=6, jz=0.7, R=4):
    lat = build_chain(n)
    c = uniform_couplings(lat, 1.0, jz) if seed is None else random_couplings(lat, 1, 1, seed)
    b = enumerate_spin_sector(0.5, n, 0)
    H = assemble_xxz(lat, c, b)
    p = build_theta(distances_from(lat, 0), R, 0.75, 1.0)
    ops = build_KL(lat, c, p, alpha, b)
    return lat, c, b, H, p, ops


def test_conjugation_identity_chain6():
    lat, c, b, H, p, ops = conjugation_case(0.3, R=5)
    g2 = dense(build_G(b, p.theta, 0.6)).diagonal()
    conj = (1 / g2)[:, None] * dense(H) * g2[None, :]
    assert np.abs(conj - dense(ops.hprime(H))).max() < 1e-10


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 1.0), st.integers(0, 1000))
def test_conjugation_identity_random(alpha, seed):
    lat, c, b, H, p, ops = conjugation_case(alpha, seed=seed)
    g2 = dense(build_G(b, p.theta, 2 * alpha)).diagonal()
    conj = (1 / g2)[:, None] * dense(H) * g2[None, :]
    assert np.abs(conj - dense(ops.hprime(H))).max() < 1e-10
    K, L = dense(ops.K), dense(ops.L)
    assert np.abs(K - K.conj().T).max() < 1e-12 and np.abs(L - L.conj().T).max() < 1e-12


def test_KL_vanish_at_zero():
    *_, H, p, ops = conjugation_case(0.0)
    assert ops.K.count_nonzero() == 0 and ops.L.count_nonzero() == 0
    dc = double_commutator(H, ops.L)
    assert abs(dc).max() == 0.0


def test_KL_support_in_annulus():
    lat, c, b, H, p, ops = conjugation_case(0.4, n=8, R=4)
    touched = {s for bond in ops.A_bonds for s in bond}
    for site in set(lat.sites) - touched:
        Sz = embed_spin_operator(b, "Sz", site)
        Sp = embed_spin_operator(b, "S+", site)
        up = b.shifted(1)
        Kup = build_KL(lat, c, p, 0.4, up).K
        assert abs(ops.K @ Sz - Sz @ ops.K).max() < 1e-14
        assert abs(Kup @ Sp - Sp @ ops.K).max() < 1e-12


def test_double_commutator_hermitian_and_mismatch():
    *_, H, p, ops = conjugation_case(0.2, seed=4, n=8)
    dc = dense(double_commutator(H, ops.L))
    assert np.abs(dc - dc.conj().T).max() < 1e-12
    with pytest.raises(TwistError):
        double_commutator(H, ops.L[:-1, :-1])


def test_lemma_reports_zero_alpha():
    lat, c, b, H, p, ops = conjugation_case(0.0)
    C0 = estimate_dimension(lat).C0
    K = check_lemma_K(ops, p, c, C0, 0.5)
    dcr = check_lemma_double(H, ops, p, C0, 1.0)
    assert K.lhs == K.rhs == 0.0 and dcr.lhs == dcr.rhs == 0.0
    assert K.passed and dcr.passed


def test_lemma_K_chain10():
    lat = build_chain(10)
    c = uniform_couplings(lat, 1.0, 1.0)
    b = enumerate_spin_sector(0.5, 10, 0)
    p = build_theta(distances_from(lat, 0), 9, 0.75, 1.0)
    ops = build_KL(lat, c, p, 0.2, b)
    rep = check_lemma_K(ops, p, c, 2.0, 0.5)
    oracle = np.linalg.norm(dense(ops.K), 2)
    expected = (math.cosh(0.4) - 1) * 4 * (1.5 + 1 - 1) / (1.5 + 1 - 2) * 1.0 * pair_norms(0.5)["sym"]
    assert rep.lhs == pytest.approx(oracle, rel=1e-10)
    assert rep.rhs == pytest.approx(expected, rel=1e-12)
    assert rep.margin >= 0


def test_L_rhs_scaling():
    ratio = lemma_L_rhs(0.2, 0.75, 1.0, 2.0, 1.0, 1.0, 16) / lemma_L_rhs(0.2, 0.75, 1.0, 2.0, 1.0, 1.0, 4)
    # (1 + 4/0.75) / (1 + 2/0.75): exactly 2 once the additive 1 is dropped
    assert ratio == pytest.approx((1 + 4 / 0.75) / (1 + 2 / 0.75))
    assert 1.7 < ratio < 2.0


def lemma_grid():
    cases = []
    for lat in (build_chain(8), build_sierpinski(1)):
        D = estimate_dimension(lat).D
        lo, hi = kappa_window(D)
        for kappa in (lo + 0.1 * (hi - lo), default_kappa(D), hi - 0.1 * (hi - lo)):
            for seed in (None, 7):
                cases.append((lat, D, kappa, seed))
    return cases


@pytest.mark.parametrize("lat,D,kappa,seed", lemma_grid())
def test_lemmas_hold_on_grid(lat, D, kappa, seed):
    c = uniform_couplings(lat, 1.0, 1.5) if seed is None else random_couplings(lat, 1.0, 1.0, seed)
    C0 = certify_dimension(lat, D).C0
    b = enumerate_spin_sector(0.5, lat.n_sites, 0 if lat.n_sites % 2 == 0 else 0.5)
    H = assemble_xxz(lat, c, b)
    df = distances_from(lat, 0)
    R = int(df.dist.max())
    p = build_theta(df, R, kappa, D)
    C1 = double_commutator_constant(max(lat.degree(i) for i in lat.sites), C0, kappa,
                                    c.jxy_max, c.jz_max, 0.5)
    for alpha in np.arange(1, 11) * 0.05:
        ops = build_KL(lat, c, p, float(alpha), b)
        for rep in (check_lemma_K(ops, p, c, C0, 0.5), check_lemma_L(ops, p, c, C0, 0.5),
                    check_lemma_double(H, ops, p, C0, C1)):
            assert rep.passed, (rep.name, alpha, rep.lhs, rep.rhs)
            if rep.name == "double_commutator":
                assert rep.constants["C1_min"] <= C1


def test_minimal_c1_inverts_rhs():
    c1 = minimal_c1(0.37, 0.3, 0.75, 1.0)
    assert lemma_double_rhs(0.3, 0.75, 1.0, c1) == pytest.approx(0.37)
    assert minimal_c1(0.0, 0.0, 0.75, 1.0) == 0.0
