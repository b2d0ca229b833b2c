"""Triangulations of thin graph-like domains.

Every edge ``e`` becomes a tube ``[0, l] x [-eps/2, eps/2]`` meshed by a
structured grid of ``nx x ny`` quads (each split into two triangles), and
every vertex becomes its template scaled by ``eps``.  The tube end columns
*are* the port nodes of the adjacent templates, so the mesh is conforming.

Two variants are built:

* ``abstract``: tubes keep the full edge length.  The domain need not fit
  in the plane, so geometry is carried by per-triangle chart coordinates
  (``tri_xy``); node coordinates ``xy`` are only a drawing layout.
* ``embedded``: vertex regions sit at the embedded vertex positions and the
  tubes fill the gaps between them, which shortens edge ``e`` to
  ``(1 - eps*tau) * l_e``.  Here ``xy`` is an honest planar realisation.

Node numbering: the vertex regions come first (in vertex order, template
node order), then the inner columns of every tube in edge order.  Both
variants built from the same inputs have identical numbering and
triangles, which makes the pull-back between them the identity on node
values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
from shapely.geometry import Polygon

from .errors import (
    MeshQualityFailure,
    PortMismatch,
    SelfIntersection,
    TooCoarse,
    UnknownRegion,
    VariantMismatch,
)
from .metric_graph import MetricGraph
from .mg_operators import cell_counts
from .templates import MIN_ANGLE_DEG, VertexTemplate, default_template, mesh_template, triangle_angles


@dataclass(frozen=True)
class Tube:
    """Structured mesh of one edge tube."""

    edge: int
    nx: int
    ny: int
    nodes: np.ndarray  # (nx + 1, ny + 1) node ids, column i at abstract position s_i = i l / nx
    length: float  # geometric length of the tube
    start: float  # embedded: distance from the initial vertex point to the tube start

    @property
    def stations(self) -> np.ndarray:
        """Geometric longitudinal coordinate of each column, from the tube start."""
        return np.linspace(0.0, self.length, self.nx + 1)


@dataclass(eq=False)
class GraphLikeMesh:
    graph: MetricGraph
    eps: float
    h: float
    variant: str
    tau: float | None
    templates: tuple[VertexTemplate, ...]
    xy: np.ndarray
    triangles: np.ndarray
    tri_xy: np.ndarray
    tri_region: np.ndarray
    region_names: tuple[str, ...]
    tubes: tuple[Tube, ...]
    vertex_nodes: tuple[np.ndarray, ...]
    port_nodes: tuple[tuple[np.ndarray, ...], ...]  # [v][j] node ids of port j, A -> B
    template_points: tuple[np.ndarray, ...] = field(repr=False)  # unscaled template coords per vertex

    # -- basic counts ---------------------------------------------------------------
    @property
    def n_nodes(self) -> int:
        return len(self.xy)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def tri_area(self) -> np.ndarray:
        x = self.tri_xy
        det = (x[:, 1, 0] - x[:, 0, 0]) * (x[:, 2, 1] - x[:, 0, 1]) - (x[:, 2, 0] - x[:, 0, 0]) * (x[:, 1, 1] - x[:, 0, 1])
        return 0.5 * np.abs(det)

    @property
    def area(self) -> float:
        return float(self.tri_area.sum())

    # -- regions --------------------------------------------------------------------
    def region_mask(self, region: str) -> np.ndarray:
        """Boolean triangle mask of a region.

        Accepted names: ``vertex:v``, ``edge_half:e:v``, ``edge:e`` (both
        halves), ``star:v`` (vertex region plus the adjacent tube halves)
        and ``all``.
        """
        if region == "all":
            return np.ones(self.n_triangles, dtype=bool)
        names = self._expand(region)
        ids = [self.region_names.index(n) for n in names]
        return np.isin(self.tri_region, ids)

    def _expand(self, region: str) -> list[str]:
        parts = region.split(":")
        try:
            if parts[0] in ("vertex", "edge_half") and region in self.region_names:
                return [region]
            if parts[0] == "edge" and len(parts) == 2:
                e = self.graph.edges[int(parts[1])]
                return [f"edge_half:{e.index}:{e.init}", f"edge_half:{e.index}:{e.term}"]
            if parts[0] == "star" and len(parts) == 2:
                v = int(parts[1])
                if 0 <= v < self.graph.n_vertices:
                    return [f"vertex:{v}"] + [f"edge_half:{e}:{v}" for e in self.graph.incident(v)]
        except (ValueError, IndexError):
            pass
        raise UnknownRegion(region)

    def region_area(self, region: str) -> float:
        return float(self.tri_area[self.region_mask(region)].sum())

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        """Node pairs of edges that belong to exactly one triangle."""
        t = self.triangles
        e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq[counts == 1]

    def min_angle(self) -> float:
        return float(triangle_angles(self.tri_xy).min())

    # -- embedded coordinate change -------------------------------------------------------
    def phi(self, e: int, s_tilde):
        """Abstract longitudinal coordinate of geometric position ``s_tilde`` on tube ``e``.

        ``s_tilde`` is measured from the initial vertex point along the
        embedded edge; the tube start maps to 0 and the tube end to ``l_e``.
        """
        t = self.tubes[e]
        length = self.graph.edges[e].length
        return (np.asarray(s_tilde, dtype=float) - t.start) * length / t.length

    # -- export -----------------------------------------------------------------------------
    def tri_tags(self) -> list[str]:
        return [self.region_names[r] for r in self.tri_region]

    def export(self, path) -> None:
        tags = self.tri_tags()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"nodes {self.n_nodes} triangles {self.n_triangles}\n")
            for x, y in self.xy:
                fh.write(f"{x:.12g} {y:.12g}\n")
            for (i, j, k), tag in zip(self.triangles, tags):
                fh.write(f"{i} {j} {k} {tag}\n")


def read_mesh_export(path) -> tuple[np.ndarray, np.ndarray, list[str]]:
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().split()
        n, t = int(head[1]), int(head[3])
        xy = np.array([[float(a) for a in fh.readline().split()] for _ in range(n)])
        tris, tags = [], []
        for _ in range(t):
            parts = fh.readline().split()
            tris.append([int(p) for p in parts[:3]])
            tags.append(parts[3])
    return xy, np.array(tris, dtype=int), tags


# -- construction ------------------------------------------------------------------------------


def default_templates(g: MetricGraph, tau: float = 0.25) -> list[VertexTemplate]:
    """Shipped template per vertex, with collars of depth ``tau * l0``."""
    collar = max(0.3, tau * g.ell0)
    return [default_template(g.degree(v), tau=tau, collar=collar) for v in range(g.n_vertices)]


def _resolve_templates(g: MetricGraph, templates, tau: float) -> list[VertexTemplate]:
    defaults = default_templates(g, tau)
    out = []
    for v in range(g.n_vertices):
        if templates is None:
            t = defaults[v]
        elif isinstance(templates, Mapping):
            t = templates.get(v)
            if t is None:
                t = defaults[v]
        else:
            t = templates[v]
        if t.n_ports != g.degree(v):
            raise PortMismatch(f"vertex {v}: template {t.name!r} has {t.n_ports} ports, degree is {g.degree(v)}")
        out.append(t)
    return out


def transverse_cells(eps: float, h: float) -> int:
    return max(4, int(math.ceil(eps / h - 1e-9)))


def _check_inputs(g: MetricGraph, eps: float, h: float) -> None:
    g.require_finite()
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    if not 0.0 < h <= eps / 4.0 * (1 + 1e-12):
        raise TooCoarse(f"h = {h} must not exceed eps/4 = {eps / 4}")


def _build(g, templates, eps, h, variant, tau, placement):
    ny = transverse_cells(eps, h)
    counts = cell_counts(g, h, even=True)
    h_unscaled = h / eps
    tmeshes = [mesh_template(t, h_unscaled, ny) for t in templates]

    xy_parts, tri_parts, chart_parts, reg_parts = [], [], [], []
    region_names: list[str] = []
    vertex_nodes, port_nodes, template_points = [], [], []
    offset = 0
    for v, (t, tm) in enumerate(zip(templates, tmeshes)):
        n = len(tm.points)
        ids = np.arange(offset, offset + n)
        vertex_nodes.append(ids)
        port_nodes.append(tuple(ids[p] for p in tm.port_nodes))
        template_points.append(tm.points)
        xy_parts.append(placement.vertex_xy(v, eps * tm.points))
        tri_parts.append(tm.triangles + offset)
        chart_parts.append(eps * tm.points[tm.triangles])
        region_names.append(f"vertex:{v}")
        reg_parts.append(np.full(len(tm.triangles), len(region_names) - 1))
        offset += n

    xy_all = np.concatenate(xy_parts)
    tubes = []
    for e, nx in zip(g.edges, counts):
        v, w = e.init, e.term
        jv, jw = g.incident(v).index(e.index), g.incident(w).index(e.index)
        first = port_nodes[v][jv]
        last = port_nodes[w][jw][::-1]  # right-handed frame: reversed at the far end
        inner = offset + np.arange((nx - 1) * (ny + 1)).reshape(nx - 1, ny + 1)
        offset += inner.size
        grid = np.vstack([first[None, :], inner, last[None, :]])
        length, start = placement.tube_length(e, eps, tau)
        tubes.append(Tube(e.index, nx, ny, grid, length, start))

        s = np.linspace(0.0, length, nx + 1)
        y = eps * (np.arange(ny + 1) / ny - 0.5)
        S, Y = np.meshgrid(s, y, indexing="ij")
        xy_tube = placement.tube_xy(e, S, Y, xy_all[first], xy_all[last], eps, tau)
        xy_parts.append(xy_tube[1:-1].reshape(-1, 2))

        a = grid[:-1, :-1]
        b = grid[1:, :-1]
        c = grid[1:, 1:]
        d = grid[:-1, 1:]
        tri = np.concatenate([np.stack([a, b, c], -1).reshape(-1, 3), np.stack([a, c, d], -1).reshape(-1, 3)])
        chart_nodes = np.stack([S, Y], -1)
        ca, cb, cc, cd = chart_nodes[:-1, :-1], chart_nodes[1:, :-1], chart_nodes[1:, 1:], chart_nodes[:-1, 1:]
        chart = np.concatenate([np.stack([ca, cb, cc], -2).reshape(-1, 3, 2), np.stack([ca, cc, cd], -2).reshape(-1, 3, 2)])
        col = np.concatenate([np.repeat(np.arange(nx), ny), np.repeat(np.arange(nx), ny)])
        near_init = col < nx // 2
        for end_v, mask in ((v, near_init), (w, ~near_init)):
            region_names.append(f"edge_half:{e.index}:{end_v}")
            tri_parts.append(tri[mask])
            chart_parts.append(chart[mask])
            reg_parts.append(np.full(int(mask.sum()), len(region_names) - 1))
        xy_all = np.concatenate(xy_parts)

    mesh = GraphLikeMesh(
        graph=g,
        eps=float(eps),
        h=float(h),
        variant=variant,
        tau=tau,
        templates=tuple(templates),
        xy=np.concatenate(xy_parts),
        triangles=np.concatenate(tri_parts),
        tri_xy=np.concatenate(chart_parts),
        tri_region=np.concatenate(reg_parts),
        region_names=tuple(region_names),
        tubes=tuple(tubes),
        vertex_nodes=tuple(vertex_nodes),
        port_nodes=tuple(port_nodes),
        template_points=tuple(template_points),
    )
    ang = mesh.min_angle()
    if ang < MIN_ANGLE_DEG - 1e-6:
        raise MeshQualityFailure(f"minimum angle {ang:.2f} deg below {MIN_ANGLE_DEG}")
    return mesh


class _AbstractLayout:
    """Drawing layout only: templates at (spread out) vertex positions, tubes
    as straight bands between their two ports."""

    def __init__(self, g: MetricGraph, templates):
        if g.embedding is not None:
            pos = np.asarray(g.embedding, dtype=float)
        else:
            n = g.n_vertices
            scale = max(g.total_length / max(n, 1), 1.0)
            pos = np.array([[scale * math.cos(2 * math.pi * v / n), scale * math.sin(2 * math.pi * v / n)] for v in range(n)])
        self.pos = pos

    def vertex_xy(self, v, scaled_points):
        return self.pos[v] + scaled_points

    def tube_length(self, e, eps, tau):
        return e.length, 0.0

    def tube_xy(self, e, S, Y, first_xy, last_xy, eps, tau):
        frac = (S / e.length)[..., None]
        return (1 - frac) * first_xy[None, :, :] + frac * last_xy[None, :, :]


class _EmbeddedLayout:
    def __init__(self, g: MetricGraph, templates):
        if g.embedding is None:
            raise VariantMismatch("the embedded variant needs vertex coordinates")
        self.g = g
        self.pos = np.asarray(g.embedding, dtype=float)
        self.templates = templates
        self.rot = []
        for v, t in enumerate(templates):
            R = None
            for j, e in enumerate(g.incident(v)):
                u = self.direction(v, e)
                _, nrm, _ = t.port_frame(j)
                ang = math.atan2(u[1], u[0]) - math.atan2(nrm[1], nrm[0])
                Rj = np.array([[math.cos(ang), -math.sin(ang)], [math.sin(ang), math.cos(ang)]])
                if R is None:
                    R = Rj
                elif np.abs(R - Rj).max() > 1e-9:
                    raise PortMismatch(f"vertex {v}: template ports do not match the embedded edge directions")
            self.rot.append(R)

    def direction(self, v, e):
        edge = self.g.edges[e]
        other = edge.term if edge.init == v else edge.init
        d = self.pos[other] - self.pos[v]
        return d / np.linalg.norm(d)

    def vertex_xy(self, v, scaled_points):
        return self.pos[v] + scaled_points @ self.rot[v].T

    def tube_length(self, e, eps, tau):
        g = self.g
        dv = self.templates[e.init].port_offset(g.incident(e.init).index(e.index))
        dw = self.templates[e.term].port_offset(g.incident(e.term).index(e.index))
        length = e.length - eps * (dv + dw)
        want = (1.0 - eps * tau) * e.length
        if abs(length - want) > 1e-9 * e.length:
            raise PortMismatch(
                f"edge {e.label!r}: port offsets {dv:.6g} + {dw:.6g} give tube length {length:.9g}, "
                f"need (1 - eps*tau) l = {want:.9g}"
            )
        return length, eps * dv

    def tube_xy(self, e, S, Y, first_xy, last_xy, eps, tau):
        _, start = self.tube_length(e, eps, tau)
        u = self.direction(e.init, e.index)
        nrm = np.array([-u[1], u[0]])
        P = self.pos[e.init] + (start + S)[..., None] * u + Y[..., None] * nrm
        if np.abs(P[0] - first_xy).max() > 1e-9 or np.abs(P[-1] - last_xy).max() > 1e-9:
            raise PortMismatch(f"edge {e.label!r}: tube ends do not meet the template ports")
        return P


def build_abstract_space(
    g: MetricGraph,
    templates: Sequence[VertexTemplate] | Mapping[int, VertexTemplate] | None,
    eps: float,
    h_target: float,
    tau: float = 0.25,
) -> GraphLikeMesh:
    """Full-length tubes glued to ``eps``-scaled templates."""
    _check_inputs(g, eps, h_target)
    temps = _resolve_templates(g, templates, tau)
    for v, t in enumerate(temps):
        t.require_collar(t.tau * g.ell0)
    return _build(g, temps, eps, h_target, "abstract", None, _AbstractLayout(g, temps))


def build_embedded_space(
    g: MetricGraph,
    templates: Sequence[VertexTemplate] | Mapping[int, VertexTemplate] | None,
    eps: float,
    tau: float,
    h_target: float,
) -> GraphLikeMesh:
    """Planar realisation with tubes shortened to ``(1 - eps*tau) * l_e``."""
    _check_inputs(g, eps, h_target)
    if not 0.0 < eps * tau < 1.0:
        raise ValueError("need 0 < eps*tau < 1")
    temps = _resolve_templates(g, templates, tau)
    for t in temps:
        t.require_collar(t.tau * g.ell0)
    layout = _EmbeddedLayout(g, temps)
    mesh = _build(g, temps, eps, h_target, "embedded", float(tau), layout)
    _check_planar_overlaps(mesh)
    return mesh


def _check_planar_overlaps(mesh: GraphLikeMesh) -> None:
    """Regions may touch along ports but must not overlap in the plane."""
    polys = []
    for v, t in enumerate(mesh.templates):
        P, _, _ = t.sample_boundary(mesh.h / mesh.eps, mesh.tubes[0].ny)
        layout = mesh.xy[mesh.vertex_nodes[v][: len(P)]]
        polys.append((f"vertex:{v}", Polygon(layout)))
    for tube in mesh.tubes:
        corners = mesh.xy[[tube.nodes[0, 0], tube.nodes[-1, 0], tube.nodes[-1, -1], tube.nodes[0, -1]]]
        polys.append((f"edge:{tube.edge}", Polygon(corners)))
    tol = 1e-9 * mesh.eps ** 2
    for i in range(len(polys)):
        for j in range(i + 1, len(polys)):
            if polys[i][1].intersection(polys[j][1]).area > tol:
                raise SelfIntersection(f"{polys[i][0]} overlaps {polys[j][0]} in the plane")
