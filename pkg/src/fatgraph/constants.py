"""Explicit constants of a graph-like space family and the resulting rates.

All geometric quantities refer to the unscaled templates (``eps = 1``);
the ``eps``-dependence enters only through :func:`delta_eps`,
:func:`delta_eps_prime` and :func:`vertex_constant`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fem import _scatter, p1_element_matrices
from .linalg import smallest_eigenpairs
from .metric_graph import MetricGraph
from .templates import VertexTemplate, check_convexity, mesh_template

LAMBDA2_H = 0.01


@dataclass
class Entry:
    value: float
    provenance: str

    def to_dict(self) -> dict:
        return {"value": self.value, "provenance": self.provenance}


def template_neumann_eigenvalues(template: VertexTemplate, h: float, k: int = 2) -> np.ndarray:
    """Lowest ``k`` Neumann eigenvalues of the unscaled template alone."""
    tm = mesh_template(template, h, max(int(math.ceil(1.0 / h - 1e-9)), 1))
    Ke, Me = p1_element_matrices(tm.points[tm.triangles])
    n = len(tm.points)
    K = _scatter(tm.triangles, Ke, n)
    M = _scatter(tm.triangles, Me, n)
    return smallest_eigenpairs(K, M, k).eigenvalues


def template_lambda2(template: VertexTemplate, h: float = LAMBDA2_H) -> tuple[float, float]:
    """First nonzero Neumann eigenvalue by Richardson extrapolation from ``h`` and ``2h``.

    P1 eigenvalues converge like ``h^2``, so ``(4 lam(h) - lam(2h)) / 3``
    removes the leading error term; ``|lam(h) - extrapolated|`` is returned
    as the error bar.
    """
    fine = template_neumann_eigenvalues(template, h)[1]
    coarse = template_neumann_eigenvalues(template, 2 * h)[1]
    extrap = (4.0 * fine - coarse) / 3.0
    return float(extrap), float(abs(fine - extrap))


@dataclass
class ConstantsReport:
    m: int
    entries: dict[str, Entry]
    per_vertex: list[dict] = field(default_factory=list)

    def __getitem__(self, key: str) -> float:
        return self.entries[key].value

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "constants": {k: e.to_dict() for k, e in self.entries.items()},
            "per_vertex": self.per_vertex,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def compute_constants(
    g: MetricGraph,
    templates: Sequence[VertexTemplate],
    m: int = 2,
    *,
    tau: float | None = None,
    h: float = LAMBDA2_H,
) -> ConstantsReport:
    """Every uniformity constant of the family ``(graph, templates)``."""
    g.require_finite()
    if len(templates) != g.n_vertices:
        raise ValueError("one template per vertex is required")
    if tau is None:
        tau = min(t.tau for t in templates)
    ell0 = g.ell0
    cache: dict[int, tuple[float, float]] = {}
    per_vertex = []
    for v, t in enumerate(templates):
        key = id(t)
        if key not in cache:
            cache[key] = template_lambda2(t, h)
        lam, err = cache[key]
        conv = check_convexity(t)
        per_vertex.append(
            {
                "vertex": v,
                "template": t.name,
                "degree": g.degree(v),
                "area": t.area,
                "lambda2": lam,
                "lambda2_error": err,
                "kappa_minus": conv.kappa_minus,
                "kappa_max": conv.kappa_max,
            }
        )

    lam_vx = min(p["lambda2"] for p in per_vertex)
    lam_vx_err = max(p["lambda2_error"] for p in per_vertex)
    lam_ed = math.pi ** 2
    c_iso = max(p["area"] / (p["degree"] * 1.0) for p in per_vertex)
    kappa_minus = max(p["kappa_minus"] for p in per_vertex)
    kappa_max = max(p["kappa_max"] for p in per_vertex)
    c_gaffney = 1.0 if kappa_minus == 0.0 else max(2.0, 8.0 * kappa_minus ** 2)
    coth = 1.0 / math.tanh(ell0 / 2.0)
    c_vxcol = tau + 2.0 / (tau * ell0 * lam_vx)
    c_vx = 4.0 * (1.0 / lam_vx + c_iso * (c_vxcol + coth))

    E = {
        "ell0": Entry(ell0, "minimum edge length"),
        "vol_Y": Entry(1.0, "port width, fixed to 1 by every template"),
        "tau": Entry(tau, "collar parameter shared by the templates (smallest if they differ)"),
        "lambda2_vx": Entry(
            lam_vx,
            f"min over vertices of the first nonzero Neumann eigenvalue of the unscaled template; "
            f"P1 FEM at h={h:g} and {2 * h:g}, Richardson extrapolated, error bar {lam_vx_err:.3g}",
        ),
        "lambda2_vx_error": Entry(lam_vx_err, "|lambda(h) - extrapolated value| for the minimising template"),
        "lambda2_ed": Entry(lam_ed, "pi^2: first nonzero Neumann eigenvalue of the unit cross-section interval"),
        "C_isoper": Entry(c_iso, "max over vertices of template area / (degree * port width)"),
        "kappa_minus": Entry(kappa_minus, "largest curvature 1/r of a concave rounded template corner (0 if all convex)"),
        "kappa_max": Entry(kappa_max, "largest boundary curvature 1/r over all rounded template corners"),
        "C_Gaffney": Entry(c_gaffney, "1 for convex templates, else max(2, 8 * kappa_minus^2)"),
        "trace_coth": Entry(coth, "coth(ell0 / 2): trace constant of a half-edge of length ell0 / 2"),
        "C_vxcol": Entry(c_vxcol, "tau + 2 / (tau * ell0 * lambda2_vx)"),
        "C_vx": Entry(c_vx, "4 * (1 / lambda2_vx + C_isoper * (C_vxcol + coth(ell0 / 2)))"),
        "est_A0_sq": Entry(coth, "bound on the squared boundary-trace norm on the graph side: coth(ell0 / 2)"),
        "est_B0_sq": Entry(coth, "bound on the squared derivative-trace norm on the graph side: coth(ell0 / 2)"),
        "est_Aeps_sq_over_eps": Entry(c_iso, "squared vertex-average trace norm on the domain side, divided by eps: C_isoper"),
        "est_Beps_sq_over_eps": Entry(c_vxcol, "squared collar trace norm on the domain side, divided by eps: C_vxcol"),
    }
    return ConstantsReport(m=m, entries=E, per_vertex=per_vertex)


def delta_eps(report: ConstantsReport, eps: float, m: int | None = None) -> float:
    """Quasi-unitary rate of the abstract family at ``eps``."""
    m = report.m if m is None else m
    a = (report["C_vx"] + m * eps / report["lambda2_ed"]) * report["C_Gaffney"]
    b = (report["C_isoper"] + report["C_vxcol"]) * report["trace_coth"]
    return math.sqrt(eps) * math.sqrt(max(a, b))


def delta_eps_prime(report: ConstantsReport, eps: float) -> float:
    """Rate for the embedded family compared with the abstract one."""
    return math.sqrt(eps) * math.sqrt(max(report["tau"], report["C_vx"] * (1.0 + report["C_Gaffney"])))


def vertex_constant(report: ConstantsReport, g: MetricGraph, v: int, eps: float) -> float:
    """Vertex-wise bound ``C_vx(v, eps)``; never larger than ``eps * C_vx`` for ``eps <= 1``."""
    p = report.per_vertex[v]
    lam = p["lambda2"]
    ratio = p["area"] / p["degree"]
    tau = report["tau"]
    best = 0.0
    for e in g.incident(v):
        le = g.edges[e].length
        val = (
            eps ** 2 / lam
            + eps ** 2 * ratio * (tau * min(le, 1.0) + 2.0 / (tau * le * lam))
            + eps * ratio / math.tanh(le / 2.0)
        )
        best = max(best, val)
    return 4.0 * best


def constants_with_rates(report: ConstantsReport, eps_values: Sequence[float]) -> dict:
    d = report.to_dict()
    d["rates"] = [
        {"eps": float(e), "delta_eps": delta_eps(report, e), "delta_eps_prime": delta_eps_prime(report, e)}
        for e in eps_values
    ]
    return d
