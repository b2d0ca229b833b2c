import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fatgraph.errors import CollarTooShallow, MeshError, NonSmoothBoundary, TemplateOverlap
from fatgraph.templates import (VertexTemplate, cap_template, check_convexity, default_template, load_template,
                                menger_curvature, mesh_template, save_template, star_template, strip_template,
                                triangle_angles)


def test_cap_area_exact():
    t = cap_template(depth=0.5, r=0.2)
    assert math.isclose(t.area, 0.5 - 2 * 0.2 ** 2 * (1 - math.pi / 4), rel_tol=1e-12)


def test_disc_cap_is_half_disc_on_a_rectangle():
    t = cap_template(depth=0.8, r=0.5)
    assert t.name == "disc_cap"
    assert math.isclose(t.area, 0.3 + math.pi / 8, rel_tol=1e-12)


def test_strip_and_ports():
    t = strip_template()
    assert t.n_ports == 2
    mid, normal, tangent = t.port_frame(0)
    assert np.allclose(normal, [1, 0]) and np.allclose(mid, [0.375, 0])
    assert math.isclose(t.collar_depth(0), 0.75, rel_tol=1e-12)


def test_star_convexity():
    rep = check_convexity(star_template(3))
    assert not rep.convex
    assert math.isclose(rep.kappa_minus, 5.0)
    assert rep.negative_only_on_vertex_part
    # discrete curvature on the rounded arcs approaches 1/r
    assert abs(rep.kappa_minus_discrete - 5.0) < 0.1


def test_cap_is_convex():
    rep = check_convexity(cap_template())
    assert rep.convex and rep.kappa_minus == 0.0


def test_invalid_templates():
    with pytest.raises(MeshError):  # port of width 2
        VertexTemplate("bad", np.array([[0, -1], [0, 1], [-1, 1], [-1, -1.0]]), ports=(0,), r_round=(0.0,))
    with pytest.raises(TemplateOverlap):
        VertexTemplate("bow", np.array([[0, 0], [1, 1], [1, 0], [0, 1.0]]), ports=(), r_round=(0.0,))
    with pytest.raises(MeshError):  # clockwise
        VertexTemplate("cw", np.array([[0, -0.5], [-1, -0.5], [-1, 0.5], [0, 0.5]]), ports=(), r_round=(0.0,))


def test_unrounded_corner_is_rejected():
    t = cap_template(r=0.0)
    with pytest.raises(NonSmoothBoundary):
        check_convexity(t)


def test_collar_requirement():
    t = strip_template(half_length=0.375)
    t.require_collar(0.7)
    with pytest.raises(CollarTooShallow):
        t.require_collar(0.8)


def test_template_roundtrip(tmp_path):
    t = star_template(4)
    save_template(t, tmp_path / "t.json")
    u = load_template(tmp_path / "t.json")
    assert u.to_dict() == t.to_dict()


@pytest.mark.parametrize("degree", [1, 2, 3, 4])
@pytest.mark.parametrize("h", [0.1, 0.05])
def test_mesh_quality_and_area(degree, h):
    t = default_template(degree)
    n_port = int(math.ceil(1 / h))
    tm = mesh_template(t, h, n_port)
    xy = tm.points[tm.triangles]
    assert triangle_angles(xy).min() >= 20.0
    e1, e2 = xy[:, 1] - xy[:, 0], xy[:, 2] - xy[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]).sum()
    # polygonal arcs undershoot the exact area by O(h^2)
    assert abs(area - t.area) < 0.05 * h ** 2 * 10
    for j, nodes in enumerate(tm.port_nodes):
        a, b = t.port_endpoints(j)
        assert len(nodes) == n_port + 1
        assert np.allclose(tm.points[nodes[0]], a) and np.allclose(tm.points[nodes[-1]], b)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 2.0))
def test_menger_curvature_of_circle(radius):
    th = np.linspace(0, 2 * np.pi, 200, endpoint=False)
    P = radius * np.column_stack([np.cos(th), np.sin(th)])
    assert np.allclose(menger_curvature(P), 1.0 / radius, rtol=1e-9)


def test_small_area_bound_is_honoured():
    # area bounds below 1e-4 must still refine the mesh
    t = strip_template()
    coarse, fine = mesh_template(t, 0.02, 50), mesh_template(t, 0.01, 100)
    assert len(fine.points) > 3 * len(coarse.points)
    xy = fine.points[fine.triangles]
    e1, e2 = xy[:, 1] - xy[:, 0], xy[:, 2] - xy[:, 0]
    assert np.max(0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])) <= 0.5 * 0.01 ** 2 * (1 + 1e-9)
