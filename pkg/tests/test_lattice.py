import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from u1twist.lattice import (
    SIERPINSKI_DIMENSION,
    LatticeError,
    build_chain,
    build_sierpinski,
    build_square,
    certify_dimension,
    distance_matrix,
    distances_from,
    estimate_dimension,
    from_edges,
    read_edge_list,
    sphere,
    sphere_counts,
)


def csgraph_distances(lat):
    rows = [i for i, j in lat.bonds] + [j for i, j in lat.bonds]
    cols = [j for i, j in lat.bonds] + [i for i, j in lat.bonds]
    adj = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(lat.n_sites, lat.n_sites))
    return shortest_path(adj, unweighted=True, directed=False).astype(int)


@st.composite
def connected_graphs(draw):
    n = draw(st.integers(2, 14))
    # random spanning tree plus extra edges
    edges = {tuple(sorted((k, draw(st.integers(0, k - 1))))) for k in range(1, n)}
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=10))
    edges |= {tuple(sorted(e)) for e in extra if e[0] != e[1]}
    return from_edges(n, sorted(edges))


def test_chain_open_bonds():
    assert build_chain(4).bonds == ((0, 1), (1, 2), (2, 3))


def test_chain_periodic_bonds():
    assert set(build_chain(3, periodic=True).bonds) == {(0, 1), (1, 2), (0, 2)}


def test_chain_too_small():
    with pytest.raises(LatticeError):
        build_chain(1)


@pytest.mark.parametrize("g,sites,bonds", [(1, 6, 9), (2, 15, 27), (3, 42, 81), (4, 123, 243)])
def test_sierpinski_counts(g, sites, bonds):
    lat = build_sierpinski(g)
    assert lat.n_sites == sites == (3 ** (g + 1) + 3) // 2
    assert lat.n_bonds == bonds == 3 ** (g + 1)


def test_sierpinski_generation_zero():
    with pytest.raises(LatticeError):
        build_sierpinski(0)


def test_sierpinski_degrees():
    lat = build_sierpinski(3)
    deg = sorted(lat.degree(i) for i in lat.sites)
    # three corners of degree 2, every other site of degree 4
    assert deg[:3] == [2, 2, 2] and set(deg[3:]) == {4}


def test_distances_chain():
    assert list(distances_from(build_chain(5), 2).dist) == [2, 1, 0, 1, 2]


def test_distances_ring():
    assert list(distances_from(build_chain(4, periodic=True), 0).dist) == [0, 1, 2, 1]


def test_gasket_corner_radius():
    lat = build_sierpinski(2)
    corners = [i for i in lat.sites if lat.degree(i) == 2]
    assert len(corners) == 3
    for c in corners:
        assert distances_from(lat, c).dist.max() == 4
    assert np.array_equal(distance_matrix(lat), csgraph_distances(lat))


def test_unknown_site():
    with pytest.raises(LatticeError):
        distances_from(build_chain(3), 5)


def test_sphere_examples():
    lat = build_chain(7)
    assert sphere(lat, 3, 2) == {1, 5}
    assert sphere(lat, 3, 5) == set()


@pytest.mark.parametrize("edges", [[(0, 0), (0, 1)], [(0, 1), (1, 0)], [(0, 1), (1, 5)], [(0, 1), (2, 3)]])
def test_from_edges_rejects(edges):
    with pytest.raises(LatticeError):
        from_edges(4, edges)


def test_read_edge_list(tmp_path):
    p = tmp_path / "tri.txt"
    p.write_text("# triangle with a tail\na b\nb c\nc a\nc d\n")
    lat = read_edge_list(p)
    assert lat.n_sites == 4 and lat.n_bonds == 4
    assert lat.labels[:2] == ("a", "b")


@settings(max_examples=60, deadline=None)
@given(connected_graphs())
def test_distance_field_invariants(lat):
    ref = csgraph_distances(lat)
    for m in lat.sites:
        df = distances_from(lat, m)
        assert df.dist[m] == 0
        assert np.array_equal(df.dist, ref[m])
        for i, j in lat.bonds:
            assert abs(int(df.dist[i]) - int(df.dist[j])) <= 1


@settings(max_examples=60, deadline=None)
@given(connected_graphs())
def test_spheres_partition(lat):
    counts = sphere_counts(lat)
    assert np.all(counts.sum(axis=1) == lat.n_sites)
    m = 0
    seen = set()
    for r in range(counts.shape[1]):
        s = sphere(lat, m, r)
        assert len(s) == counts[m, r]
        assert not s & seen
        seen |= s
    assert seen == set(lat.sites)


@settings(max_examples=40, deadline=None)
@given(connected_graphs(), st.floats(1.0, 2.5))
def test_certificate_residuals_nonnegative(lat, D):
    est = certify_dimension(lat, D)
    assert est.C0 > 0 and np.all(est.residuals >= 0)
    assert est.in_scope == (D < 2.0)


def test_chain_dimension_exact():
    for lat in (build_chain(64), build_chain(9, periodic=True)):
        est = estimate_dimension(lat)
        assert est.D == 1.0 and est.C0 == 2.0


def test_square_flagged():
    est = estimate_dimension(build_square(8))
    assert est.D >= 2.0 and not est.in_scope
    assert "outside" in est.note


def test_gasket_certificate_at_log3_log2():
    lat = build_sierpinski(4)
    est = certify_dimension(lat, SIERPINSKI_DIMENSION)
    assert math.isfinite(est.C0) and np.all(est.residuals >= 0) and est.in_scope


def test_gasket_sphere_constant_grows_with_generation():
    # corner spheres at radius 2^k hold 2^k + 1 sites, so C0 at ln3/ln2 is not uniform
    c0 = [certify_dimension(build_sierpinski(g), SIERPINSKI_DIMENSION).C0 for g in (2, 3, 4, 5)]
    assert all(b >= a for a, b in zip(c0, c0[1:])) and c0[-1] > c0[0]


def test_estimate_grid_validation():
    with pytest.raises(LatticeError):
        estimate_dimension(build_chain(4), [])
