import math

import numpy as np
import pytest
import scipy.sparse as sp

from fatgraph.errors import DegenerateTriangle, PortMismatch, TooCoarse, UnknownRegion
from fatgraph.fem import assemble_neumann, export_coo, p1_element_matrices, rayleigh_region, smallest_eigenpairs
from fatgraph.mesh import build_abstract_space, build_embedded_space, default_templates, read_mesh_export
from fatgraph.metric_graph import cycle_graph, single_edge, star_graph, theta_graph
from fatgraph.templates import cap_template


@pytest.mark.parametrize("graph", [single_edge(), star_graph(), theta_graph(), cycle_graph()], ids=str)
def test_abstract_area(graph):
    eps = 0.2
    temps = default_templates(graph)
    m = build_abstract_space(graph, temps, eps, 0.05)
    expected = eps * graph.total_length + eps ** 2 * sum(t.area for t in temps)
    assert abs(m.area - expected) < 2e-3 * expected
    assert math.isclose(m.region_area("all"), m.area)
    for e in range(graph.n_edges):
        assert math.isclose(m.region_area(f"edge:{e}"), eps * graph.edges[e].length, rel_tol=1e-10)
    assert m.min_angle() >= 20.0


def test_regions():
    g = star_graph()
    m = build_abstract_space(g, None, 0.2, 0.05)
    star0 = m.region_area("star:0")
    assert math.isclose(star0, m.region_area("vertex:0") + 3 * 0.2 * 0.5, rel_tol=1e-10)
    for bad in ("vertex:9", "edge:7", "nothing", "star:x"):
        with pytest.raises(UnknownRegion):
            m.region_mask(bad)


def test_tubes_share_port_nodes():
    g = star_graph()
    m = build_abstract_space(g, None, 0.2, 0.05)
    for t in m.tubes:
        e = g.edges[t.edge]
        jv = g.incident(e.init).index(t.edge)
        assert np.array_equal(t.nodes[0], m.port_nodes[e.init][jv])


def test_too_coarse():
    with pytest.raises(TooCoarse):
        build_abstract_space(star_graph(), None, 0.2, 0.1)


def test_port_mismatch():
    with pytest.raises(PortMismatch):
        build_abstract_space(star_graph(), [cap_template()] * 4, 0.2, 0.05)


def test_embedded_star_geometry_is_rejected():
    # arms of the star template reach far beyond eps * tau * l / 2
    with pytest.raises(PortMismatch):
        build_embedded_space(star_graph(), None, 0.2, 0.25, 0.05)


def test_embedded_tube_lengths_and_phi():
    g, eps, tau = single_edge(), 0.2, 0.25
    m = build_embedded_space(g, None, eps, tau, 0.05)
    for t in m.tubes:
        ell = g.edges[t.edge].length
        assert math.isclose(t.length, (1 - eps * tau) * ell, rel_tol=1e-12)
        assert math.isclose(m.phi(t.edge, t.start), 0.0, abs_tol=1e-12)
        assert math.isclose(m.phi(t.edge, t.start + t.length), ell, rel_tol=1e-12)


def test_export_roundtrip(tmp_path):
    m = build_abstract_space(single_edge(), None, 0.2, 0.05)
    p = tmp_path / "m.txt"
    m.export(p)
    xy, tri, tags = read_mesh_export(p)
    assert np.allclose(xy, m.xy, atol=1e-10)
    assert np.array_equal(tri, m.triangles)
    assert tags == m.tri_tags()
    assert p.read_text().splitlines()[0] == f"nodes {m.n_nodes} triangles {m.n_triangles}"


def test_element_matrices():
    tri = np.array([[[0, 0], [1, 0], [0, 1.0]]])
    K, M = p1_element_matrices(tri)
    assert np.allclose(K[0].sum(axis=1), 0)
    assert math.isclose(M[0].sum(), 0.5)
    assert np.allclose(K[0], [[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]])
    with pytest.raises(DegenerateTriangle):
        p1_element_matrices(np.array([[[0, 0], [1, 0], [2, 0.0]]]))


def test_neumann_system_basic():
    m = build_abstract_space(theta_graph(), None, 0.2, 0.05)
    fem = assemble_neumann(m)
    one = np.ones(fem.n)
    assert np.allclose(fem.K @ one, 0, atol=1e-9)
    assert math.isclose(one @ fem.M @ one, m.area, rel_tol=1e-12)
    assert abs(fem.K - fem.K.T).max() < 1e-12
    kk, mm = rayleigh_region(fem, one, "vertex:0")
    assert kk == pytest.approx(0, abs=1e-12) and mm == pytest.approx(m.region_area("vertex:0"))
    # broken mass restricted to gathered conforming vectors is the conforming mass
    x = np.random.default_rng(0).standard_normal(fem.n)
    Ex = fem.gather @ x
    assert math.isclose(Ex @ fem.broken_mass @ Ex, x @ fem.M @ x, rel_tol=1e-12)


def test_cycle_is_a_flat_periodic_strip():
    # abstract cycle: two tubes plus two strips form a periodic strip of
    # circumference 2*pi + 2 * eps * strip_length
    g, eps = cycle_graph(), 0.2
    temps = default_templates(g)
    P = 2 * math.pi + 2 * eps * 2 * temps[0].collar_depth(0) / 2
    m = build_abstract_space(g, temps, eps, 0.02)
    res = smallest_eigenpairs(assemble_neumann(m), 5)
    exact = (2 * math.pi / P) ** 2 * np.array([0, 1, 1, 4, 4])
    assert np.allclose(res.eigenvalues, exact, rtol=2e-3, atol=1e-8)


def test_export_coo(tmp_path):
    p = tmp_path / "k.txt"
    export_coo(sp.identity(3, format="csr"), p)
    lines = p.read_text().splitlines()
    assert lines[0] == "3 3 3" and lines[1] == "0 0 1"
