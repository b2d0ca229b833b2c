import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from fatgraph.constants import (compute_constants, constants_with_rates, delta_eps, delta_eps_prime,
                                template_lambda2, vertex_constant)
from fatgraph.mesh import default_templates
from fatgraph.metric_graph import single_edge, star_graph
from fatgraph.templates import strip_template


@pytest.fixture(scope="module")
def star_report():
    g = star_graph()
    return g, compute_constants(g, default_templates(g))


@pytest.fixture(scope="module")
def dumbbell_report():
    g = single_edge()
    return g, compute_constants(g, default_templates(g))


def test_rectangle_lambda2():
    # 0.75 x 1 rectangle: first nonzero Neumann eigenvalue pi^2 (unit side)
    lam, err = template_lambda2(strip_template(0.375))
    assert math.isclose(lam, math.pi ** 2, rel_tol=1e-4)
    assert err < 1e-2


def test_convex_templates_give_unit_gaffney_constant(dumbbell_report):
    _, rep = dumbbell_report
    assert rep["C_Gaffney"] == 1.0
    assert rep["kappa_minus"] == 0.0


def test_star_constants(star_report):
    g, rep = star_report
    assert rep["C_Gaffney"] == max(2.0, 8 * 5.0 ** 2)
    assert rep["lambda2_ed"] == math.pi ** 2
    tau, l0, lam = rep["tau"], rep["ell0"], rep["lambda2_vx"]
    assert math.isclose(rep["C_vxcol"], tau + 2 / (tau * l0 * lam))
    coth = 1 / math.tanh(l0 / 2)
    assert math.isclose(rep["C_vx"], 4 * (1 / lam + rep["C_isoper"] * (rep["C_vxcol"] + coth)))
    assert math.isclose(rep["C_isoper"], max(p["area"] / p["degree"] for p in rep.per_vertex))


def test_report_json_has_provenance(star_report):
    _, rep = star_report
    d = json.loads(rep.to_json())
    for entry in d["constants"].values():
        assert set(entry) == {"value", "provenance"} and entry["provenance"]
    rates = constants_with_rates(rep, [0.1, 0.05])["rates"]
    assert rates[0]["delta_eps"] > rates[1]["delta_eps"]


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-4, 1.0))
def test_rates_scale_like_sqrt_eps(star_report, eps):
    g, rep = star_report
    assert delta_eps(rep, eps) >= delta_eps(rep, eps / 2)
    # the eps-dependent correction inside delta is tiny, so delta/sqrt(eps) is nearly constant
    r = delta_eps(rep, eps) / math.sqrt(eps) / (delta_eps(rep, 1e-6) / 1e-3)
    assert 1 - 1e-12 <= r <= 1.01
    assert math.isclose(delta_eps_prime(rep, eps) / math.sqrt(eps), delta_eps_prime(rep, 1.0), rel_tol=1e-12)
    for v in range(g.n_vertices):
        assert vertex_constant(rep, g, v, eps) <= eps * rep["C_vx"] * (1 + 1e-12)
