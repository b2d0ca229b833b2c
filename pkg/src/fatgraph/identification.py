"""Identification operators between metric-graph and thin-domain function spaces.

The metric-graph side is the conforming P1 space of
:func:`~fatgraph.mg_operators.assemble_kirchhoff_laplacian`.  The thin-domain
side is the *broken* space of :class:`~fatgraph.fem.FemSystem` (every tube
and every vertex region with its own copy of the port nodes), because
``J f`` is discontinuous across ports: it equals ``f_e(s) / sqrt(eps)`` on
tube ``e`` and vanishes on the vertex regions.  On a tube whose columns sit
at the metric-graph grid points, ``J`` is an exact isometry, ``J*J = 1``.

All adjoints and norms are taken in the mass-matrix inner products.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import EmptySpectrum, FactorizationFailure, SolverFailure, VariantMismatch
from .fem import FemSystem, assemble_neumann
from .linalg import Factorized, weighted_operator_norm
from .mesh import GraphLikeMesh
from .metric_graph import MetricGraph
from .mg_operators import MGGrid, assemble_kirchhoff_laplacian


class WeightedHilbert:
    """``R^n`` with inner product ``<x, y> = x^T M y``."""

    def __init__(self, M, K=None):
        self.M = sp.csr_matrix(M)
        self.K = None if K is None else sp.csr_matrix(K)
        self._Minv: Factorized | None = None

    @property
    def dim(self) -> int:
        return self.M.shape[0]

    @property
    def Minv(self) -> Factorized:
        if self._Minv is None:
            self._Minv = Factorized(self.M)
        return self._Minv

    def inner(self, x, y) -> float:
        return float(np.asarray(x) @ (self.M @ np.asarray(y)))

    def norm(self, x) -> float:
        return math.sqrt(max(self.inner(x, x), 0.0))

    def resolvent(self) -> Callable[[np.ndarray], np.ndarray]:
        """``x -> (K + M)^{-1} M x``, the discrete ``(Laplacian + 1)^{-1}``."""
        if self.K is None:
            raise ValueError("space has no stiffness matrix")
        lu = Factorized(self.K + self.M)
        return lambda x: lu.solve(self.M @ x)


class IdentificationMap:
    """Matrix ``J`` from ``src`` to ``tgt`` with its weighted adjoint
    ``J* = M_src^{-1} J^T M_tgt``."""

    def __init__(self, J, src: WeightedHilbert, tgt: WeightedHilbert):
        self.J = sp.csr_matrix(J)
        if self.J.shape != (tgt.dim, src.dim):
            raise ValueError(f"J has shape {self.J.shape}, spaces need {(tgt.dim, src.dim)}")
        self.src, self.tgt = src, tgt

    def __call__(self, x):
        return self.J @ x

    apply = __call__

    def adjoint_apply(self, u):
        return self.src.Minv.solve(self.J.T @ (self.tgt.M @ u))

    def adjoint(self) -> "AdjointMap":
        return AdjointMap(self)

    def norm(self, **kw) -> float:
        return weighted_operator_norm(self.apply, self.adjoint_apply, self.src.M, self.src.dim, **kw)

    def adjoint_residual(self, f, u) -> float:
        """``|<J f, u>_tgt - <f, J* u>_src|``."""
        return abs(self.tgt.inner(self.apply(f), u) - self.src.inner(f, self.adjoint_apply(u)))


class AdjointMap:
    def __init__(self, base: IdentificationMap):
        self.base = base
        self.src, self.tgt = base.tgt, base.src

    def __call__(self, u):
        return self.base.adjoint_apply(u)

    apply = __call__

    def adjoint_apply(self, f):
        return self.base.apply(f)


def longitudinal_interpolation(grid: MGGrid, e: int, stations: np.ndarray) -> sp.csr_matrix:
    """Rows: stations on edge ``e``; columns: metric-graph dofs.  Piecewise-linear
    interpolation of the P1 function on the edge grid."""
    pts = grid.points(e)
    dofs = grid.edge_dofs(e)
    idx = np.clip(np.searchsorted(pts, stations, side="right") - 1, 0, len(pts) - 2)
    t = (stations - pts[idx]) / (pts[idx + 1] - pts[idx])
    t = np.clip(t, 0.0, 1.0)
    rows = np.concatenate([np.arange(len(stations))] * 2)
    cols = np.concatenate([dofs[idx], dofs[idx + 1]])
    vals = np.concatenate([1.0 - t, t])
    A = sp.coo_matrix((vals, (rows, cols)), shape=(len(stations), grid.n_dofs)).tocsr()
    A.eliminate_zeros()
    return A


def _hat_values(nodes: np.ndarray, x: np.ndarray) -> sp.csr_matrix:
    """Values of the P1 hat functions on ``nodes`` at points ``x``."""
    idx = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, len(nodes) - 2)
    t = np.clip((x - nodes[idx]) / (nodes[idx + 1] - nodes[idx]), 0.0, 1.0)
    rows = np.concatenate([np.arange(len(x))] * 2)
    return sp.csr_matrix((np.concatenate([1.0 - t, t]), (rows, np.concatenate([idx, idx + 1]))),
                         shape=(len(x), len(nodes)))


def longitudinal_projection(grid: MGGrid, e: int, stations: np.ndarray) -> sp.csr_matrix:
    """L2 projection of the P1 function on edge ``e`` onto the P1 space of ``stations``.

    Equals :func:`longitudinal_interpolation` when the station grid refines the
    edge grid.  Otherwise nodal interpolation would alias: its discrete
    adjoint does not approximate the continuous one.
    """
    pts = grid.points(e)
    if len(stations) == len(pts) and np.allclose(stations, pts, rtol=0, atol=1e-12 * pts[-1]):
        return longitudinal_interpolation(grid, e, stations)
    brk = np.union1d(pts, stations)
    a, b = brk[:-1], brk[1:]
    gx, gw = np.polynomial.legendre.leggauss(2)  # exact for products of two linears
    x = (0.5 * (b - a)[:, None] * gx[None, :] + 0.5 * (a + b)[:, None]).ravel()
    w = (0.5 * (b - a)[:, None] * gw[None, :]).ravel()
    S = _hat_values(stations, x)
    C = (S.T @ sp.diags(w) @ _hat_values(pts, x)).tocsc()  # stations x edge nodes
    Ms = (S.T @ sp.diags(w) @ S).tocsc()
    from scipy.sparse.linalg import splu

    local = splu(Ms).solve(C.toarray())
    local[np.abs(local) < 1e-14 * np.abs(local).max()] = 0.0
    dofs = grid.edge_dofs(e)
    E = sp.csr_matrix((np.ones(len(dofs)), (np.arange(len(dofs)), dofs)), shape=(len(dofs), grid.n_dofs))
    return (sp.csr_matrix(local) @ E).tocsr()


@dataclass
class LaplacianPair:
    """Both sides of a comparison: metric-graph pair and thin-domain system."""

    grid: MGGrid
    mg_K: sp.csr_matrix
    mg_M: sp.csr_matrix
    fem: FemSystem


def build_J0(g: MetricGraph, mg_grid: MGGrid, mesh: GraphLikeMesh, eps: float, fem: FemSystem | None = None) -> IdentificationMap:
    """``(J f)`` = ``f_e(s) / sqrt(eps)`` on tube ``e``, 0 on vertex regions."""
    if mesh.variant != "abstract":
        raise VariantMismatch("the graph identification needs the abstract (full-length) variant")
    if mesh.graph != g or mg_grid.graph != g:
        raise VariantMismatch("graph, grid and mesh must describe the same graph")
    if fem is None:
        fem = assemble_neumann(mesh)
    pair = assemble_kirchhoff_laplacian(g, grid=mg_grid)
    blocks = []
    scale = 1.0 / math.sqrt(eps)
    for v in range(g.n_vertices):
        blocks.append(sp.csr_matrix((len(mesh.vertex_nodes[v]), mg_grid.n_dofs)))
    for tube in mesh.tubes:
        e = tube.edge
        s = np.linspace(0.0, g.edges[e].length, tube.nx + 1)
        P = longitudinal_projection(mg_grid, e, s)
        # broken block order is the row-major ravel of tube.nodes: column i, then y
        blocks.append(sp.csr_matrix(sp.kron(P, np.ones((tube.ny + 1, 1)))) * scale)
    J = sp.vstack(blocks, format="csr")
    src = WeightedHilbert(pair.M, pair.K)
    tgt = WeightedHilbert(fem.broken_mass)
    jm = IdentificationMap(J, src, tgt)
    jm.fem = fem
    return jm


def adjoint_J0(jmap: IdentificationMap) -> AdjointMap:
    """Cross-sectional average on each tube times ``sqrt(eps)``; vertex regions dropped."""
    return jmap.adjoint()


# -- defects ----------------------------------------------------------------------------


@dataclass
class DefectReport:
    eps: float
    d1: float
    d2: float
    d3: float
    delta_eps: float | None = None
    hausdorff: float | None = None
    hausdorff_truncation: float | None = None

    @property
    def bound_ok(self) -> bool | None:
        if self.delta_eps is None:
            return None
        return max(self.d1, self.d2, self.d3) <= 2.0 * self.delta_eps

    @property
    def hausdorff_bound_ok(self) -> bool | None:
        if self.delta_eps is None or self.hausdorff is None:
            return None
        return self.hausdorff <= math.sqrt(3.0) * 2.0 * self.delta_eps

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bound_ok"] = self.bound_ok
        d["hausdorff_bound_ok"] = self.hausdorff_bound_ok
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def defect_norms_laplacian(jmap: IdentificationMap, fem: FemSystem | None = None, *, rtol: float = 1e-4,
                           maxiter: int = 300, seed: int = 0) -> tuple[float, float, float]:
    """``(d1, d2, d3)``: operator norms of ``(1 - J*J) R0``, ``(1 - J J*) R``
    and ``J R0 - R J`` for the resolvents at spectral parameter -1."""
    fem = fem if fem is not None else jmap.fem
    try:
        R0 = jmap.src.resolvent()
        fem.resolvent_factor
    except FactorizationFailure as exc:
        raise SolverFailure(str(exc)) from exc
    R = fem.broken_resolvent
    J, Js = jmap.apply, jmap.adjoint_apply
    n0, n1 = jmap.src.dim, jmap.tgt.dim
    M0, M1 = jmap.src.M, jmap.tgt.M
    kw = dict(rtol=rtol, maxiter=maxiter, seed=seed)

    def q0(f):
        return f - Js(J(f))

    def q1(u):
        return u - J(Js(u))

    d1 = weighted_operator_norm(lambda f: q0(R0(f)), lambda f: R0(q0(f)), M0, n0, **kw)
    d2 = weighted_operator_norm(lambda u: q1(R(u)), lambda u: R(q1(u)), M1, n1, **kw)
    d3 = weighted_operator_norm(lambda f: J(R0(f)) - R(J(f)), lambda u: R0(Js(u)) - Js(R(u)), M0, n0, **kw)
    return d1, d2, d3


def hausdorff_resolvent_distance(spec_a, spec_b) -> float:
    """Hausdorff distance of ``{1/(lam+1)} U {0}`` for the two spectra.

    The appended 0 stands for the images of the eigenvalues beyond the
    computed range, so truncating both spectra at ``lam_max`` changes the
    result by at most ``1/(lam_max+1)``.
    """
    a = np.asarray(spec_a, dtype=float)
    b = np.asarray(spec_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise EmptySpectrum("both spectra must contain at least one eigenvalue")
    ra = np.append(1.0 / (a + 1.0), 0.0)
    rb = np.append(1.0 / (b + 1.0), 0.0)
    D = np.abs(ra[:, None] - rb[None, :])
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))


# -- embedded versus abstract --------------------------------------------------------------


@dataclass
class EmbeddedDefectReport:
    eps: float
    tau: float
    one_minus_jsj: float  # ||1 - J~* J~||
    one_minus_jjs: float  # ||1 - J~ J~*||
    commutator: float  # ||J~ R - R~ J~||
    expected: float  # eps * tau

    @property
    def rel_error(self) -> float:
        if self.expected == 0:
            return max(self.one_minus_jsj, self.one_minus_jjs)
        return max(abs(self.one_minus_jsj - self.expected), abs(self.one_minus_jjs - self.expected)) / self.expected

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rel_error"] = self.rel_error
        return d


def embedded_defects(g: MetricGraph, abstract_mesh: GraphLikeMesh, embedded_mesh: GraphLikeMesh, eps: float,
                     tau: float, *, rtol: float = 1e-6, maxiter: int = 300, seed: int = 0) -> EmbeddedDefectReport:
    """Defects of the pull-back ``J~ u = u o Phi`` from the abstract to the embedded domain.

    The two meshes share node numbering, so ``J~`` is the identity on node
    values and all geometry sits in the two mass/stiffness pairs.
    """
    if abstract_mesh.variant != "abstract":
        raise VariantMismatch("first mesh must be the abstract variant")
    if tau != 0 and embedded_mesh.variant != "embedded":
        raise VariantMismatch("second mesh must be the embedded variant")
    if abstract_mesh.n_nodes != embedded_mesh.n_nodes or not np.array_equal(abstract_mesh.triangles, embedded_mesh.triangles):
        raise VariantMismatch("meshes must share node numbering and triangles")
    A = assemble_neumann(abstract_mesh)
    E = assemble_neumann(embedded_mesh)
    Ha, He = WeightedHilbert(A.M, A.K), WeightedHilbert(E.M, E.K)
    jt = IdentificationMap(sp.identity(A.n, format="csr"), Ha, He)
    kw = dict(rtol=rtol, maxiter=maxiter, seed=seed)

    def q_src(f):
        return f - jt.adjoint_apply(jt.apply(f))

    def q_tgt(u):
        return u - jt.apply(jt.adjoint_apply(u))

    n = A.n
    a1 = weighted_operator_norm(q_src, q_src, Ha.M, n, **kw)
    a2 = weighted_operator_norm(q_tgt, q_tgt, He.M, n, **kw)
    Ra, Re = Ha.resolvent(), He.resolvent()
    c = weighted_operator_norm(
        lambda f: jt.apply(Ra(f)) - Re(jt.apply(f)),
        lambda u: Ra(jt.adjoint_apply(u)) - jt.adjoint_apply(Re(u)),
        Ha.M,
        n,
        **kw,
    )
    return EmbeddedDefectReport(float(eps), float(tau), a1, a2, c, float(eps * tau))
