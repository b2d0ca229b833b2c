"""Unscaled vertex-neighbourhood shapes and their triangulation.

A template is a simple polygon (counter-clockwise, vertex point at the
origin) whose corners may be replaced by circular arcs.  Some polygon sides
are *ports*: straight segments of length 1 where an edge tube is attached.
Both sides adjacent to a port must be perpendicular to it, so that the tube
walls continue straight into the template and the glued boundary is smooth
there.  Those port-endpoint corners are never rounded; every other corner
should carry a positive rounding radius.

For port ``j`` running from ``A`` to ``B`` the outward normal ``n`` points
away from the template and the tube attached there leaves along ``n``.  The
tube cross-section coordinate ``y`` runs from ``A`` (``y = -1/2``) to ``B``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import triangle
from shapely.geometry import Polygon

from .errors import CollarTooShallow, MeshError, MeshQualityFailure, NonSmoothBoundary, TemplateOverlap

MIN_ANGLE_DEG = 20.0
_LEN_RTOL = 1e-9


def _unit(v):
    return v / np.linalg.norm(v)


def _cross(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _rot90(v):
    return np.array([-v[1], v[0]])


@dataclass(frozen=True)
class Corner:
    """Rounding data of one polygon corner (``radius == 0``: sharp)."""

    point: np.ndarray
    turn: float  # signed turning angle; > 0 convex, < 0 concave
    radius: float
    t_in: np.ndarray  # tangent point on the incoming side
    t_out: np.ndarray  # tangent point on the outgoing side
    center: np.ndarray | None

    @property
    def tangent_length(self) -> float:
        return self.radius * math.tan(abs(self.turn) / 2.0)


@dataclass(frozen=True, eq=False)
class VertexTemplate:
    name: str
    polygon: np.ndarray
    ports: tuple[int, ...]
    r_round: tuple[float, ...]
    tau: float = 0.25
    corners: tuple[Corner, ...] = field(init=False, repr=False)

    def __post_init__(self):
        P = np.asarray(self.polygon, dtype=float)
        object.__setattr__(self, "polygon", P)
        n = len(P)
        if n < 3:
            raise MeshError("a template polygon needs at least three corners")
        r = tuple(float(x) for x in self.r_round)
        if len(r) == 1:
            r = r * n
        if len(r) != n:
            raise MeshError("r_round needs one radius per polygon corner (or a single value)")
        # port endpoints are glued smoothly to the tube walls and stay sharp
        port_corners = {i for p in self.ports for i in (p % n, (p + 1) % n)}
        r = tuple(0.0 if i in port_corners else r[i] for i in range(n))
        object.__setattr__(self, "r_round", r)
        object.__setattr__(self, "ports", tuple(int(p) for p in self.ports))
        if not 0.0 < self.tau <= 1.0:
            raise MeshError("tau must lie in (0, 1]")

        poly = Polygon(P)
        if not poly.is_valid or not poly.is_simple:
            raise TemplateOverlap(f"template {self.name!r}: polygon is not simple")
        if _signed_area(P) <= 0:
            raise MeshError(f"template {self.name!r}: polygon must be counter-clockwise")
        for j, p in enumerate(self.ports):
            a, b = P[p % n], P[(p + 1) % n]
            if abs(np.linalg.norm(b - a) - 1.0) > _LEN_RTOL:
                raise MeshError(f"template {self.name!r}: port {j} has width {np.linalg.norm(b - a):.12g} != 1")
            d = _unit(b - a)
            prev_dir = _unit(a - P[(p - 1) % n])
            next_dir = _unit(P[(p + 2) % n] - b)
            if abs(prev_dir @ d) > 1e-9 or abs(next_dir @ d) > 1e-9:
                raise MeshError(f"template {self.name!r}: sides next to port {j} must be perpendicular to it")

        corners = []
        for i in range(n):
            p, q, s = P[i - 1], P[i], P[(i + 1) % n]
            a, b = _unit(q - p), _unit(s - q)
            turn = math.atan2(_cross(a, b), float(a @ b))
            rad = r[i]
            if rad > 0 and abs(turn) > 1e-12:
                t = rad * math.tan(abs(turn) / 2.0)
                t_in, t_out = q - t * a, q + t * b
                center = t_in + math.copysign(rad, turn) * _rot90(a)
            else:
                t_in, t_out, center = q.copy(), q.copy(), None
            corners.append(Corner(q, turn, rad, t_in, t_out, center))
        object.__setattr__(self, "corners", tuple(corners))
        for i in range(n):
            side = np.linalg.norm(P[(i + 1) % n] - P[i])
            used = corners[i].tangent_length + corners[(i + 1) % n].tangent_length
            if used > side * (1 + 1e-9):
                raise MeshError(f"template {self.name!r}: rounding radii too large for side {i}")

    # -- geometry ------------------------------------------------------------------
    @property
    def n_ports(self) -> int:
        return len(self.ports)

    def port_endpoints(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        n = len(self.polygon)
        p = self.ports[j]
        return self.polygon[p % n].copy(), self.polygon[(p + 1) % n].copy()

    def port_frame(self, j: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(midpoint, outward normal, tangent A->B)`` of port ``j``."""
        a, b = self.port_endpoints(j)
        d = _unit(b - a)
        return 0.5 * (a + b), np.array([d[1], -d[0]]), d

    def port_offset(self, j: int) -> float:
        """Distance from the vertex point (origin) to the line of port ``j``."""
        c, nrm, _ = self.port_frame(j)
        return float(c @ nrm)

    def collar_depth(self, j: int) -> float:
        """Length of the straight walls behind port ``j``."""
        n = len(self.polygon)
        p = self.ports[j] % n
        before = np.linalg.norm(self.polygon[p] - self.polygon[p - 1]) - self.corners[(p - 1) % n].tangent_length
        q = (p + 1) % n
        after = np.linalg.norm(self.polygon[(q + 1) % n] - self.polygon[q]) - self.corners[(q + 1) % n].tangent_length
        return float(min(before, after))

    def require_collar(self, depth: float) -> None:
        for j in range(self.n_ports):
            have = self.collar_depth(j)
            if have < depth * (1 - 1e-12):
                raise CollarTooShallow(
                    f"template {self.name!r}: port {j} has a straight collar of {have:.6g} < {depth:.6g}"
                )

    @property
    def area(self) -> float:
        """Exact area of the rounded shape."""
        A = _signed_area(self.polygon)
        for c in self.corners:
            if c.center is None:
                continue
            th = abs(c.turn)
            cut = c.radius ** 2 * (math.tan(th / 2.0) - th / 2.0)
            A += -cut if c.turn > 0 else cut
        return float(A)

    # -- boundary ------------------------------------------------------------------
    def sample_boundary(self, h: float, n_port: int, max_arc_angle: float = math.pi / 12):
        """Closed boundary polyline with spacing about ``h``.

        Returns ``(points, kind, port_nodes)``: ``kind[i]`` labels the piece
        starting at point ``i`` ("port", "line" or "arc"), and
        ``port_nodes[j]`` lists the point indices of port ``j`` from A to B.
        """
        n = len(self.polygon)
        port_sides = {p % n: j for j, p in enumerate(self.ports)}
        pts: list[np.ndarray] = []
        kind: list[str] = []
        port_nodes: list[list[int]] = [[] for _ in self.ports]
        for i in range(n):
            c = self.corners[i]
            if c.center is not None:
                # arc from c.t_in to c.t_out around the centre
                v0 = c.t_in - c.center
                phi0 = math.atan2(v0[1], v0[0])
                k = max(int(math.ceil(c.radius * abs(c.turn) / h - 1e-9)), int(math.ceil(abs(c.turn) / max_arc_angle - 1e-9)), 1)
                for m in range(k):
                    phi = phi0 + c.turn * m / k
                    pts.append(c.center + c.radius * np.array([math.cos(phi), math.sin(phi)]))
                    kind.append("arc")
            # straight piece from c.t_out to the next corner's t_in
            a, b = c.t_out, self.corners[(i + 1) % n].t_in
            L = float(np.linalg.norm(b - a))
            if L <= 1e-12:
                continue
            if i in port_sides:
                k = n_port
                j = port_sides[i]
                port_nodes[j] = list(range(len(pts), len(pts) + k + 1))
            else:
                k = max(int(math.ceil(L / h - 1e-9)), 1)
            for m in range(k):
                pts.append(a + (b - a) * m / k)
                kind.append("port" if i in port_sides else "line")
        P = np.array(pts)
        N = len(P)
        for j, nodes in enumerate(port_nodes):
            port_nodes[j] = [x % N for x in nodes]
        return P, kind, [np.array(p, dtype=int) for p in port_nodes]

    # -- serialisation ----------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "polygon": [[float(x), float(y)] for x, y in self.polygon],
            "ports": list(self.ports),
            "r_round": list(self.r_round),
            "tau": self.tau,
        }


def _signed_area(P: np.ndarray) -> float:
    x, y = P[:, 0], P[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def template_from_dict(d: dict) -> VertexTemplate:
    return VertexTemplate(
        name=str(d.get("name", "template")),
        polygon=np.array(d["polygon"], dtype=float),
        ports=tuple(d["ports"]),
        r_round=tuple(np.atleast_1d(d.get("r_round", 0.2))),
        tau=float(d.get("tau", 0.25)),
    )


def load_template(path: str | Path) -> VertexTemplate:
    with open(path, encoding="utf-8") as fh:
        return template_from_dict(json.load(fh))


def save_template(t: VertexTemplate, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(t.to_dict(), fh, indent=2)


# -- shipped shapes ---------------------------------------------------------------------


def cap_template(offset: float = 0.125, depth: float = 0.5, r: float = 0.2, tau: float = 0.25) -> VertexTemplate:
    """End cap for a degree-1 vertex: a ``depth x 1`` rectangle with rounded far corners.

    The port lies on the line ``x = offset`` and faces ``+x``.  With ``r = 0.5``
    the far end becomes a half disc.
    """
    x0 = offset - depth
    P = np.array([[offset, -0.5], [offset, 0.5], [x0, 0.5], [x0, -0.5]])
    name = "disc_cap" if abs(r - 0.5) < 1e-12 else "cap"
    return VertexTemplate(name, P, ports=(0,), r_round=(0.0, 0.0, r, r), tau=tau)


def strip_template(half_length: float = 0.375, tau: float = 0.25) -> VertexTemplate:
    """Degree-2 vertex: a straight strip with ports at both ends (``+x`` first)."""
    D = half_length
    P = np.array([[D, -0.5], [D, 0.5], [-D, 0.5], [-D, -0.5]])
    return VertexTemplate("strip", P, ports=(0, 2), r_round=(0.0,), tau=tau)


def star_template(
    degree: int,
    r: float = 0.2,
    arm: float | None = None,
    angles: Sequence[float] | None = None,
    tau: float = 0.25,
    collar: float = 0.35,
) -> VertexTemplate:
    """Junction of ``degree`` straight arms of width 1 with rounded concave corners.

    ``angles`` (radians, strictly increasing within one turn) give the arm
    directions; the default spaces them evenly starting at 0.  ``arm`` is the
    distance from the vertex point to every port; by default it leaves a
    straight collar of length ``collar`` behind each port.
    """
    if degree < 3:
        raise MeshError("star templates need degree >= 3 (use cap_template / strip_template)")
    if angles is None:
        angles = [2.0 * math.pi * k / degree for k in range(degree)]
    angles = [float(a) for a in angles]
    if len(angles) != degree:
        raise MeshError("one arm angle per port is required")
    gaps = [(angles[(k + 1) % degree] - angles[k]) % (2 * math.pi) for k in range(degree)]
    if min(gaps) <= 0 or max(gaps) >= math.pi:
        raise MeshError("consecutive arms must be less than pi apart")
    if arm is None:
        arm = max(0.5 / math.tan(g / 2.0) + r * math.tan((math.pi - g) / 2.0) for g in gaps) + collar
    u = [np.array([math.cos(a), math.sin(a)]) for a in angles]
    pts, ports, radii = [], [], []
    for k in range(degree):
        uk, vk = u[k], _rot90(u[k])
        un = u[(k + 1) % degree]
        vn = _rot90(un)
        # left wall of arm k meets the right wall of arm k+1
        A = np.column_stack([uk, -un])
        t = np.linalg.solve(A, (-0.5 * vn) - 0.5 * vk)
        q = t[0] * uk + 0.5 * vk
        ports.append(len(pts))
        pts += [arm * uk - 0.5 * vk, arm * uk + 0.5 * vk, q]
        radii += [0.0, 0.0, r]
    return VertexTemplate(f"star{degree}", np.array(pts), ports=tuple(ports), r_round=tuple(radii), tau=tau)


def default_template(degree: int, tau: float = 0.25, collar: float = 0.3) -> VertexTemplate:
    """Shipped shape for a vertex of the given degree with straight collars of
    at least ``collar`` behind every port."""
    if degree == 1:
        r = 0.2
        return cap_template(depth=max(0.5, collar + r), r=r, tau=tau)
    if degree == 2:
        return strip_template(half_length=max(0.375, collar / 2.0), tau=tau)
    return star_template(degree, tau=tau, collar=max(0.35, collar))


# -- curvature ------------------------------------------------------------------------


@dataclass
class ConvexityReport:
    kappa_minus: float  # largest curvature of concave boundary parts (0 if convex)
    kappa_minus_discrete: float
    kappa_max: float  # largest absolute boundary curvature
    convex: bool
    negative_only_on_vertex_part: bool
    samples: np.ndarray = field(repr=False)  # signed Menger curvature per boundary sample

    def to_dict(self) -> dict:
        return {
            "kappa_minus": self.kappa_minus,
            "kappa_minus_discrete": self.kappa_minus_discrete,
            "kappa_max": self.kappa_max,
            "convex": self.convex,
            "negative_only_on_vertex_part": self.negative_only_on_vertex_part,
        }


def menger_curvature(P: np.ndarray) -> np.ndarray:
    """Signed curvature of the circle through each point and its two neighbours
    on a closed counter-clockwise polyline (positive where the region is convex)."""
    a, b, c = np.roll(P, 1, axis=0), P, np.roll(P, -1, axis=0)
    ab, bc, ca = b - a, c - b, a - c
    cross = ab[:, 0] * bc[:, 1] - ab[:, 1] * bc[:, 0]
    denom = np.linalg.norm(ab, axis=1) * np.linalg.norm(bc, axis=1) * np.linalg.norm(ca, axis=1)
    return 2.0 * cross / denom


def check_convexity(template: VertexTemplate, h: float = 0.02) -> ConvexityReport:
    """Boundary curvature of a template (tube walls and ports are flat).

    Raises :class:`NonSmoothBoundary` when a corner away from the ports has
    no rounding.
    """
    for i, c in enumerate(template.corners):
        port_corner = any(i in (p, (p + 1) % len(template.polygon)) for p in template.ports)
        if not port_corner and c.center is None and abs(c.turn) > 1e-12:
            raise NonSmoothBoundary(f"template {template.name!r}: corner {i} has no rounding")
    P, kind, _ = template.sample_boundary(h, max(int(math.ceil(1.0 / h)), 1))
    kappa = menger_curvature(P)
    # port-endpoint corners are interior to the glued domain; skip them
    glued = np.array([k == "port" for k in kind])
    glued |= np.roll(glued, 1)
    kappa_eff = np.where(glued, 0.0, kappa)
    analytic_minus = max([1.0 / c.radius for c in template.corners if c.center is not None and c.turn < 0], default=0.0)
    analytic_max = max([1.0 / c.radius for c in template.corners if c.center is not None], default=0.0)
    neg = kappa_eff < -1e-9
    kinds = np.array(kind)
    return ConvexityReport(
        kappa_minus=float(analytic_minus),
        kappa_minus_discrete=float(max(0.0, -kappa_eff.min())),
        kappa_max=float(analytic_max),
        convex=analytic_minus == 0.0,
        negative_only_on_vertex_part=bool(np.all(kinds[neg] != "port")),
        samples=kappa_eff,
    )


# -- triangulation -----------------------------------------------------------------------


@dataclass(frozen=True)
class TemplateMesh:
    """Triangulation of an unscaled template."""

    points: np.ndarray
    triangles: np.ndarray
    port_nodes: tuple[np.ndarray, ...]  # per port, A -> B
    n_boundary: int


def triangle_angles(xy: np.ndarray) -> np.ndarray:
    """Interior angles (degrees) of triangles given as an array of shape (T, 3, 2)."""
    out = np.empty(xy.shape[:2])
    for k in range(3):
        a = xy[:, (k + 1) % 3] - xy[:, k]
        b = xy[:, (k + 2) % 3] - xy[:, k]
        cosang = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        out[:, k] = np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0)))
    return out


_MESH_CACHE: dict = {}


def _triangulate(template: VertexTemplate, h: float, n_port: int) -> TemplateMesh:
    P, _, ports = template.sample_boundary(h, n_port)
    N = len(P)
    seg = np.column_stack([np.arange(N), (np.arange(N) + 1) % N])
    max_area = 0.5 * h * h
    # the switch parser does not understand exponent notation
    area = np.format_float_positional(max_area, trim="-")
    out = triangle.triangulate({"vertices": P, "segments": seg}, f"pq{MIN_ANGLE_DEG:g}a{area}Y")
    pts = np.asarray(out["vertices"], dtype=float)
    tris = np.asarray(out["triangles"], dtype=int)
    if not np.array_equal(pts[:N], P):
        raise MeshError("triangulator moved boundary points")
    # counter-clockwise orientation
    xy = pts[tris]
    det = (xy[:, 1, 0] - xy[:, 0, 0]) * (xy[:, 2, 1] - xy[:, 0, 1]) - (xy[:, 2, 0] - xy[:, 0, 0]) * (xy[:, 1, 1] - xy[:, 0, 1])
    tris[det < 0] = tris[det < 0][:, [0, 2, 1]]
    ang = triangle_angles(pts[tris]).min()
    if ang < MIN_ANGLE_DEG - 1e-6:
        raise MeshQualityFailure(f"template {template.name!r}: minimum angle {ang:.2f} deg")
    return TemplateMesh(pts, tris, tuple(ports), N)


def mesh_template(template: VertexTemplate, h: float, n_port: int) -> TemplateMesh:
    """Triangulate ``template`` with boundary spacing ``h`` and ``n_port`` cells per port."""
    if not h > 0 or n_port < 1:
        raise MeshError("need h > 0 and at least one cell per port")
    key = (json.dumps(template.to_dict(), sort_keys=True), float(h), int(n_port))
    if key not in _MESH_CACHE:
        if len(_MESH_CACHE) > 64:
            _MESH_CACHE.clear()
        _MESH_CACHE[key] = _triangulate(template, float(h), int(n_port))
    return _MESH_CACHE[key]
