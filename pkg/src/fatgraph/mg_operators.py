"""Operators on a metric graph: Kirchhoff Laplacian, gradient, divergence,
harmonic 1-forms and the spectrum of the associated Dirac-type operator.

Functions are P1 finite elements on a uniform grid per edge.  Continuous
functions share one degree of freedom per vertex; 1-forms are stored edgewise
(no continuity across vertices) and carry the oriented evaluation
``F_e(v) = -F_e(0)`` at the initial and ``+F_e(l_e)`` at the terminal vertex.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import GridMismatch, TooCoarse
from .linalg import EigResult, WeightedOperatorPair, cluster_ids, smallest_eigenpairs
from .metric_graph import MetricGraph, betti_numbers


def cell_counts(g: MetricGraph, h_target: float, *, even: bool = False) -> list[int]:
    """Cells per edge so that every edge has spacing <= h_target (at least 2)."""
    g.require_finite()
    if not h_target > 0:
        raise ValueError("h_target must be positive")
    counts = []
    for e in g.edges:
        n = max(int(math.ceil(e.length / h_target - 1e-9)), 1)
        if even and n % 2:
            n += 1
        if n < 2:
            raise TooCoarse(f"edge {e.label!r}: h_target={h_target} gives only {n} cell(s)")
        counts.append(n)
    return counts


@dataclass(frozen=True)
class MGGrid:
    """Uniform P1 grids on the edges of a finite metric graph.

    Continuous numbering: vertex dofs ``0..|V|-1`` followed by the interior
    nodes of edge 0, edge 1, ...  Broken numbering: the ``n_e + 1`` nodes of
    each edge, edge after edge.
    """

    graph: MetricGraph
    counts: tuple[int, ...]

    @classmethod
    def from_h(cls, g: MetricGraph, h_target: float, even: bool = False) -> "MGGrid":
        return cls(g, tuple(cell_counts(g, h_target, even=even)))

    def __post_init__(self):
        self.graph.require_finite()
        if len(self.counts) != self.graph.n_edges:
            raise GridMismatch("one cell count per edge is required")
        if min(self.counts) < 2:
            raise TooCoarse("every edge needs at least two cells")

    def spacing(self, e: int) -> float:
        return self.graph.edges[e].length / self.counts[e]

    def points(self, e: int) -> np.ndarray:
        return np.linspace(0.0, self.graph.edges[e].length, self.counts[e] + 1)

    @cached_property
    def _offsets(self) -> np.ndarray:
        interior = np.array([n - 1 for n in self.counts])
        return self.graph.n_vertices + np.concatenate([[0], np.cumsum(interior)])

    @property
    def n_dofs(self) -> int:
        return int(self._offsets[-1])

    def edge_dofs(self, e: int) -> np.ndarray:
        """Continuous dof index of each grid node on edge ``e`` (s = 0 first)."""
        edge = self.graph.edges[e]
        inner = np.arange(self._offsets[e], self._offsets[e + 1])
        return np.concatenate([[edge.init], inner, [edge.term]]).astype(int)

    @cached_property
    def _broken_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([n + 1 for n in self.counts])])

    @property
    def n_broken(self) -> int:
        return int(self._broken_offsets[-1])

    def broken_slice(self, e: int) -> slice:
        return slice(int(self._broken_offsets[e]), int(self._broken_offsets[e + 1]))

    @cached_property
    def gather(self) -> sp.csr_matrix:
        """Broken <- continuous copy map (each node value repeated per edge)."""
        rows, cols = [], []
        for e in range(self.graph.n_edges):
            sl = self.broken_slice(e)
            rows.extend(range(sl.start, sl.stop))
            cols.extend(self.edge_dofs(e))
        data = np.ones(len(rows))
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n_broken, self.n_dofs))

    # -- per-edge element matrices ----------------------------------------------
    def edge_mass(self, e: int) -> sp.csr_matrix:
        return _p1_mass_1d(self.counts[e], self.spacing(e))

    def edge_stiffness(self, e: int) -> sp.csr_matrix:
        return _p1_stiff_1d(self.counts[e], self.spacing(e))

    def edge_derivative(self, e: int) -> sp.csr_matrix:
        """``G[i, j] = int phi_i phi_j' ds`` on edge ``e``."""
        return _p1_deriv_1d(self.counts[e])

    @cached_property
    def broken_mass(self) -> sp.csr_matrix:
        return sp.block_diag([self.edge_mass(e) for e in range(self.graph.n_edges)], format="csr")

    @cached_property
    def broken_stiffness(self) -> sp.csr_matrix:
        return sp.block_diag(
            [self.edge_stiffness(e) for e in range(self.graph.n_edges)], format="csr"
        )


def _p1_mass_1d(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n + 1, 2.0 * h / 3.0)
    main[[0, -1]] = h / 3.0
    off = np.full(n, h / 6.0)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def _p1_stiff_1d(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n + 1, 2.0 / h)
    main[[0, -1]] = 1.0 / h
    off = np.full(n, -1.0 / h)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def _p1_deriv_1d(n: int) -> sp.csr_matrix:
    main = np.zeros(n + 1)
    main[0], main[-1] = -0.5, 0.5
    return sp.diags([np.full(n, -0.5), main, np.full(n, 0.5)], [-1, 0, 1], format="csr")


# -- edgewise sampled functions and forms ------------------------------------------


@dataclass
class _EdgeSamples:
    grid: MGGrid
    values: list[np.ndarray]

    def __post_init__(self):
        if len(self.values) != self.grid.graph.n_edges:
            raise GridMismatch("one sample vector per edge is required")
        for e, v in enumerate(self.values):
            if len(v) != self.grid.counts[e] + 1:
                raise GridMismatch(f"edge {e}: expected {self.grid.counts[e] + 1} samples, got {len(v)}")
        self.values = [np.asarray(v, dtype=float) for v in self.values]

    def broken(self) -> np.ndarray:
        return np.concatenate(self.values)

    def inner(self, other: "_EdgeSamples") -> float:
        _check_same_grid(self, other)
        return float(sum(a @ (self.grid.edge_mass(e) @ b) for e, (a, b) in enumerate(zip(self.values, other.values))))

    def norm(self) -> float:
        return math.sqrt(max(self.inner(self), 0.0))


def _check_same_grid(a, b) -> None:
    if a.grid.counts != b.grid.counts or a.grid.graph is not b.grid.graph and a.grid.graph != b.grid.graph:
        raise GridMismatch("objects live on different grids")


class MGFunction(_EdgeSamples):
    """Function on the metric graph, sampled on every edge grid."""

    @classmethod
    def from_dofs(cls, grid: MGGrid, x: np.ndarray) -> "MGFunction":
        x = np.asarray(x, dtype=float)
        return cls(grid, [x[grid.edge_dofs(e)] for e in range(grid.graph.n_edges)])

    @classmethod
    def from_callable(cls, grid: MGGrid, f) -> "MGFunction":
        """``f(e, s)`` evaluated on every edge grid."""
        return cls(grid, [np.asarray(f(e, grid.points(e)), dtype=float) * np.ones(grid.counts[e] + 1) for e in range(grid.graph.n_edges)])

    def vertex_values(self, v: int) -> list[float]:
        g = self.grid.graph
        out = []
        for e in g.incident(v):
            edge = g.edges[e]
            out.append(self.values[e][0] if edge.init == v else self.values[e][-1])
        return out

    def is_continuous(self, atol: float = 1e-12) -> bool:
        return all(np.ptp(self.vertex_values(v)) <= atol for v in range(self.grid.graph.n_vertices))

    def to_dofs(self) -> np.ndarray:
        if not self.is_continuous(atol=1e-10):
            raise GridMismatch("function is not continuous at the vertices")
        x = np.zeros(self.grid.n_dofs)
        for e, vals in enumerate(self.values):
            x[self.grid.edge_dofs(e)] = vals
        return x


class MGOneForm(_EdgeSamples):
    """1-form ``F = (F_e ds_e)`` stored by its edgewise coefficient samples."""

    def oriented_eval(self, e: int, v: int) -> float:
        edge = self.grid.graph.edges[e]
        if v == edge.term:
            return float(self.values[e][-1])
        if v == edge.init:
            return -float(self.values[e][0])
        raise ValueError(f"vertex {v} is not an endpoint of edge {e}")

    def flux(self, v: int) -> float:
        return sum(self.oriented_eval(e, v) for e in self.grid.graph.incident(v))

    def satisfies_flux_condition(self, atol: float = 1e-10) -> bool:
        return all(abs(self.flux(v)) <= atol for v in range(self.grid.graph.n_vertices))


# -- operators ---------------------------------------------------------------------


def assemble_kirchhoff_laplacian(
    g: MetricGraph, h_target: float | None = None, *, grid: MGGrid | None = None
) -> WeightedOperatorPair:
    """P1 stiffness/mass pair of the standard (Kirchhoff) Laplacian.

    Continuity at the vertices is built into the shared vertex dofs; the
    zero-flux condition is then the natural boundary condition of the form.
    """
    if grid is None:
        if h_target is None:
            raise ValueError("pass either h_target or grid")
        grid = MGGrid.from_h(g, h_target)
    P = grid.gather
    K = (P.T @ grid.broken_stiffness @ P).tocsr()
    M = (P.T @ grid.broken_mass @ P).tocsr()
    pair = WeightedOperatorPair(K, M)
    pair.grid = grid
    return pair


def mg_gradient(g: MetricGraph, f: MGFunction) -> MGOneForm:
    """``d f = (f_e' ds_e)``, as the edgewise L2 projection of the P1 derivative."""
    if f.grid.graph != g:
        raise GridMismatch("function belongs to another graph")
    from scipy.sparse.linalg import spsolve

    out = []
    for e, vals in enumerate(f.values):
        out.append(spsolve(f.grid.edge_mass(e).tocsc(), f.grid.edge_derivative(e) @ vals))
    return MGOneForm(f.grid, out)


def mg_divergence(g: MetricGraph, F: MGOneForm) -> MGFunction:
    """``d* F = (-F_e')``, edgewise L2 projection; M-adjoint to :func:`mg_gradient`
    on 1-forms obeying the vertex flux condition."""
    if F.grid.graph != g:
        raise GridMismatch("1-form belongs to another graph")
    from scipy.sparse.linalg import spsolve

    out = []
    for e, vals in enumerate(F.values):
        out.append(-spsolve(F.grid.edge_mass(e).tocsc(), F.grid.edge_derivative(e) @ vals))
    return MGFunction(F.grid, out)


def cycle_basis(g: MetricGraph) -> list[np.ndarray]:
    """Fundamental cycles of a spanning tree as signed edge-indicator vectors.

    Each vector ``c`` solves ``B c = 0`` for the oriented incidence matrix B;
    its entries are +1 / -1 on edges traversed along / against orientation.
    """
    nV = g.n_vertices
    parent_edge = [-1] * nV
    seen = [False] * nV
    seen[0] = True
    order = [0]
    tree = set()
    for v in order:
        for e in g.incident(v):
            edge = g.edges[e]
            w = edge.term if edge.init == v else edge.init
            if w is not None and not seen[w]:
                seen[w] = True
                parent_edge[w] = e
                tree.add(e)
                order.append(w)

    def path_to_root(v):
        # signed edges from v up to the root, oriented in the walking direction
        path = []
        while parent_edge[v] >= 0:
            e = parent_edge[v]
            edge = g.edges[e]
            up = edge.init if edge.term == v else edge.term
            path.append((e, 1.0 if edge.init == v else -1.0))
            v = up
        return path

    basis = []
    for edge in g.edges:
        if edge.index in tree or edge.term is None:
            continue
        c = np.zeros(g.n_edges)
        c[edge.index] = 1.0  # walk init -> term along the edge
        for e, sgn in path_to_root(edge.term):  # then term -> root
            c[e] += sgn
        for e, sgn in path_to_root(edge.init):  # and root -> init (reversed)
            c[e] -= sgn
        basis.append(c)
    return basis


def harmonic_oneform_basis(g: MetricGraph, h_target: float | None = None, *, grid: MGGrid | None = None) -> list[MGOneForm]:
    """``b1`` independent 1-forms with ``d* F = 0`` and zero vertex flux."""
    if grid is None:
        grid = MGGrid.from_h(g, h_target)
    forms = []
    for c in cycle_basis(g):
        forms.append(MGOneForm(grid, [np.full(grid.counts[e] + 1, c[e]) for e in range(g.n_edges)]))
    return forms


def kirchhoff_spectrum(g: MetricGraph, h_target: float, k: int, *, seed: int = 0) -> EigResult:
    pair = assemble_kirchhoff_laplacian(g, h_target)
    return smallest_eigenpairs(pair.K, pair.M, k, seed=seed)


def dirac_from_laplacian(lams: Sequence[float], b0: int, b1: int, k: int, zero_tol: float = 1e-8) -> np.ndarray:
    """Dirac eigenvalues from the 0-form Laplacian spectrum.

    The nonzero spectra of ``d*d`` and ``d d*`` coincide, so the Dirac
    operator has ``+-sqrt(lam)`` for every nonzero ``lam`` and a kernel of
    dimension ``dim ker d + dim ker d* = b0 + b1``.
    """
    lams = np.asarray(lams, dtype=float)
    nonzero = lams[lams > zero_tol * max(1.0, lams.max(initial=1.0))]
    root = np.sqrt(nonzero)
    vals = np.concatenate([np.zeros(b0 + b1), root, -root])
    vals = vals[np.argsort(np.abs(vals), kind="stable")][:k]
    return np.sort(vals)


def mg_dirac_spectrum(g: MetricGraph, h_target: float, k: int, *, seed: int = 0) -> np.ndarray:
    b0, b1 = betti_numbers(g)
    # k Dirac values need at most k + 1 Laplacian values (one of them is 0)
    res = kirchhoff_spectrum(g, h_target, k + b0, seed=seed)
    return dirac_from_laplacian(res.eigenvalues, b0, b1, k)


def write_spectrum_csv(path, eigenvalues, source: str, rtol: float = 1e-6) -> None:
    ids = cluster_ids(eigenvalues, rtol)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "eigenvalue", "multiplicity_cluster_id", "source"])
        for i, (lam, c) in enumerate(zip(eigenvalues, ids)):
            w.writerow([i, f"{lam:.12g}", int(c), source])
