"""Numerical checks of analytic identities and inequalities.

* Bochner/Gaffney identity ``||d*W||^2 = ||nabla W||^2 + S(W, W)`` for
  gradients ``W = grad u`` of Neumann eigenfunctions on discs and annuli,
  where ``S`` integrates the boundary curvature against ``|W|^2``;
* Kato's inequality ``|d|w|| <= |nabla w|`` for sample vector fields;
* the collar trace inequality ``||u||_Z^2 <= a ||du||^2 + (2/a) ||u||^2``;
* homothety scaling of norms, curvature and eigenvalues;
* equality of the nonzero spectra of ``d*d`` and ``d d*`` on a metric graph.

Every check returns a :class:`CheckReport`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy import special
from scipy.optimize import brentq

from .errors import CollarTooShallow, QuadratureUnderResolved
from .fem import FemSystem, _scatter, p1_element_matrices
from .linalg import seeded_vector, smallest_eigenpairs
from .metric_graph import MetricGraph, betti_numbers, euler_index
from .mg_operators import MGGrid, harmonic_oneform_basis
from .templates import VertexTemplate, menger_curvature, mesh_template


@dataclass
class CheckReport:
    name: str
    terms: dict
    residual: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "terms": self.terms, "residual": self.residual, "pass": bool(self.passed),
                **({"details": self.details} if self.details else {})}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


# -- Bessel helpers ---------------------------------------------------------------------------


def bessel_derivative_zero(n: int = 1, k: int = 1, tol: float = 1e-12) -> float:
    """``k``-th positive zero of ``J_n'`` by bracketing on a grid, then Newton."""
    f = lambda x: special.jvp(n, x, 1)
    df = lambda x: special.jvp(n, x, 2)
    grid = np.linspace(0.05 if n else 0.5, 10.0 + 4.0 * k + n, 4000)
    vals = f(grid)
    idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    if len(idx) < k:
        raise QuadratureUnderResolved(f"no bracket for zero {k} of J_{n}'")
    a, b = grid[idx[k - 1]], grid[idx[k - 1] + 1]
    x = 0.5 * (a + b)
    for _ in range(50):
        step = f(x) / df(x)
        x -= step
        if abs(step) < tol:
            return float(x)
    raise QuadratureUnderResolved("Newton iteration for a Bessel zero did not converge")


def annulus_neumann_k(inner: float, outer: float = 1.0, n: int = 1) -> float:
    """Smallest ``k`` with a Neumann eigenfunction ``R(kr) cos(n theta)`` on the annulus."""
    def cross(k):
        return special.jvp(n, k * inner) * special.yvp(n, k * outer) - special.jvp(n, k * outer) * special.yvp(n, k * inner)

    ks = np.linspace(0.1, 20.0, 4000)
    v = np.array([cross(k) for k in ks])
    i = int(np.nonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0)[0][0])
    return float(brentq(cross, ks[i], ks[i + 1], xtol=1e-14))


# -- radial test fields --------------------------------------------------------------------------


@dataclass
class RadialField:
    """Gradient field ``W = grad u`` with ``u = R(r) cos(theta)`` on
    ``{inner <= r <= outer}``; ``R`` given with its first two derivatives."""

    R: Callable
    dR: Callable
    d2R: Callable
    lam: float  # -Laplace u = lam u
    inner: float
    outer: float
    name: str

    def scaled(self, eps: float) -> "RadialField":
        """The field ``x -> W(x / eps)`` on the ``eps``-scaled domain, written as
        the gradient of ``eps * u(x / eps)``."""
        return RadialField(
            R=lambda r: eps * self.R(r / eps),
            dR=lambda r: self.dR(r / eps),
            d2R=lambda r: self.d2R(r / eps) / eps,
            lam=self.lam / eps ** 2,
            inner=self.inner * eps,
            outer=self.outer * eps,
            name=f"{self.name} scaled by {eps:g}",
        )


def disc_field() -> RadialField:
    k = bessel_derivative_zero(1, 1)
    return RadialField(
        R=lambda r: special.jv(1, k * r),
        dR=lambda r: k * special.jvp(1, k * r, 1),
        d2R=lambda r: k * k * special.jvp(1, k * r, 2),
        lam=k * k,
        inner=0.0,
        outer=1.0,
        name="unit disc, u = J1(k r) cos(theta), J1'(k) = 0",
    )


def annulus_field(inner: float = 0.5) -> RadialField:
    k = annulus_neumann_k(inner)
    c = -special.jvp(1, k * inner) / special.yvp(1, k * inner)

    def R(r):
        return special.jv(1, k * r) + c * special.yv(1, k * r)

    return RadialField(
        R=R,
        dR=lambda r: k * (special.jvp(1, k * r, 1) + c * special.yvp(1, k * r, 1)),
        d2R=lambda r: k * k * (special.jvp(1, k * r, 2) + c * special.yvp(1, k * r, 2)),
        lam=k * k,
        inner=inner,
        outer=1.0,
        name=f"annulus {inner:g} < r < 1, Neumann eigenfunction with cos(theta)",
    )


def gaffney_terms(field: RadialField, order: int) -> dict:
    """Quadrature of ``||u||^2``, ``||W||^2``, ``||d*W||^2``, ``||nabla W||^2`` and the
    boundary term: Gauss-Legendre with ``order`` nodes in ``r``, ``2*order``-point
    trapezoid in ``theta``."""
    xg, wg = np.polynomial.legendre.leggauss(order)
    a, b = field.inner, field.outer
    r = 0.5 * (b - a) * xg + 0.5 * (a + b)
    wr = 0.5 * (b - a) * wg * r  # polar area element
    nth = 2 * order
    th = 2.0 * math.pi * np.arange(nth) / nth
    wth = 2.0 * math.pi / nth
    Rr, dR, d2R = field.R(r)[:, None], field.dR(r)[:, None], field.d2R(r)[:, None]
    rr = r[:, None]
    c, s = np.cos(th)[None, :], np.sin(th)[None, :]
    u = Rr * c
    u_r, u_t = dR * c, -Rr * s
    u_rr, u_rt, u_tt = d2R * c, -dR * s, -Rr * c
    # Hessian in the orthonormal polar frame
    h_rr = u_rr
    h_tt = u_r / rr + u_tt / rr ** 2
    h_rt = u_rt / rr - u_t / rr ** 2
    lap = h_rr + h_tt
    W2 = u_r ** 2 + (u_t / rr) ** 2

    def integrate(F):
        return float(np.sum(wr[:, None] * F) * wth)

    terms = {
        "u_sq": integrate(u ** 2),
        "W_sq": integrate(W2),
        "divW_sq": integrate(lap ** 2),
        "hess_sq": integrate(h_rr ** 2 + h_tt ** 2 + 2 * h_rt ** 2),
    }
    # boundary: curvature +1/outer on the outer circle, -1/inner on the inner one
    bnd = 0.0
    for rad, kappa in ((b, 1.0 / b), (a, -1.0 / a if a > 0 else 0.0)):
        if rad == 0.0:
            continue
        wt = field.R(np.array([rad]))[0] / rad  # |W_theta| = |R(r)| |sin| / r
        bnd += kappa * float(np.sum((wt * np.sin(th)) ** 2) * wth) * rad
    terms["boundary"] = bnd
    terms["lambda"] = field.lam
    return terms


def verify_gaffney_identity(field: RadialField | None = None, orders=(16, 32, 64), rtol: float = 1e-3) -> CheckReport:
    """Relative residual of ``||d*W||^2 = ||nabla W||^2 + S(W, W)``."""
    field = field or disc_field()
    history = []
    for n in orders:
        t = gaffney_terms(field, n)
        res = abs(t["divW_sq"] - t["hess_sq"] - t["boundary"]) / abs(t["divW_sq"])
        history.append((n, res, t))
    last, prev = history[-1][2], history[-2][2] if len(history) > 1 else None
    if prev is not None:
        for key in ("divW_sq", "hess_sq", "boundary"):
            if abs(last[key] - prev[key]) > 1e-3 * max(abs(last[key]), 1e-300):
                raise QuadratureUnderResolved(f"term {key} changes by more than 1e-3 between orders")
    residuals = [h[1] for h in history]
    floor = 1e-12
    decreasing = all(b <= max(a, floor) for a, b in zip(residuals, residuals[1:]))
    # analytic consistency: ||d*W||^2 = lam^2 ||u||^2 for an eigenfunction
    eig_check = abs(last["divW_sq"] - field.lam ** 2 * last["u_sq"]) / last["divW_sq"]
    passed = residuals[-1] <= rtol and decreasing and eig_check <= rtol
    return CheckReport(
        name=f"gaffney identity: {field.name}",
        terms={k: last[k] for k in ("divW_sq", "hess_sq", "boundary", "W_sq", "u_sq", "lambda")},
        residual=residuals[-1],
        passed=bool(passed),
        details={"orders": list(orders), "residuals": residuals, "decreasing": decreasing,
                 "boundary_nonnegative": last["boundary"] >= 0, "eigen_relation_residual": eig_check},
    )


def verify_gaffney_estimate(field: RadialField, kappa_minus: float, order: int = 64) -> CheckReport:
    """``||nabla W||^2 <= C (||d*W||^2 + ||W||^2)`` with ``C = max(2, 8 kappa_minus^2)``
    (``C = 1`` when ``kappa_minus == 0``)."""
    t = gaffney_terms(field, order)
    C = 1.0 if kappa_minus == 0 else max(2.0, 8.0 * kappa_minus ** 2)
    rhs = C * (t["divW_sq"] + t["W_sq"])
    return CheckReport(
        name=f"gaffney estimate: {field.name}",
        terms={"hess_sq": t["hess_sq"], "divW_sq": t["divW_sq"], "W_sq": t["W_sq"], "C_Gaffney": C,
               "boundary": t["boundary"]},
        residual=t["hess_sq"] / rhs,
        passed=bool(t["hess_sq"] <= rhs),
    )


def gaffney_scaling(field: RadialField | None = None, eps: float = 0.1, order: int = 64, rtol: float = 1e-6) -> CheckReport:
    """For ``W_eps(x) = W(x/eps)`` in two dimensions the three Gaffney terms are scale invariant."""
    field = field or disc_field()
    base = gaffney_terms(field, order)
    sc = gaffney_terms(field.scaled(eps), order)
    ratios = {k: sc[k] / base[k] for k in ("divW_sq", "hess_sq", "boundary")}
    ratios["W_sq"] = sc["W_sq"] / (eps ** 2 * base["W_sq"])
    res = max(abs(r - 1.0) for r in ratios.values())
    return CheckReport(name=f"gaffney term scaling, eps={eps:g}", terms=ratios, residual=res, passed=res <= rtol)


# -- Kato -----------------------------------------------------------------------------------------


def _fd_jacobian(fn, pts: np.ndarray, h: float) -> np.ndarray:
    """Central differences: returns (P, ncomp, 2)."""
    ex, ey = np.array([h, 0.0]), np.array([0.0, h])
    jx = (fn(pts + ex) - fn(pts - ex)) / (2 * h)
    jy = (fn(pts + ey) - fn(pts - ey)) / (2 * h)
    return np.stack([jx, jy], axis=-1)


def kato_sample_fields() -> dict[str, Callable[[np.ndarray], np.ndarray]]:
    k = bessel_derivative_zero(1, 1)

    def bessel_grad(p):
        x, y = p[:, 0], p[:, 1]
        r = np.hypot(x, y)
        r = np.where(r == 0, 1e-300, r)
        c, s = x / r, y / r
        ur = k * special.jvp(1, k * r) * c
        ut = -special.jv(1, k * r) * s / r
        return np.column_stack([ur * c - ut * s, ur * s + ut * c])

    def scalar(p):
        return np.exp(0.5 * p[:, 0]) * np.sin(2 * p[:, 1]) + 1.5

    return {
        "constant": lambda p: np.tile([1.0, -2.0], (len(p), 1)),
        "rotational": lambda p: np.column_stack([-p[:, 1], p[:, 0]]),
        "radial_unit": lambda p: p / np.linalg.norm(p, axis=1)[:, None],
        "scalar_times_constant": lambda p: scalar(p)[:, None] * np.array([0.6, 0.8])[None, :],
        "bessel_gradient": bessel_grad,
    }


def verify_kato(fields: dict | None = None, h_fd: float = 1e-4, n: int = 41, zero_tol: float = 1e-8) -> CheckReport:
    """Largest value of ``|grad |w|| - |nabla w|`` (Frobenius) over a sample grid."""
    fields = fields or kato_sample_fields()
    g = np.linspace(-0.95, 0.95, n) + 1e-3  # avoid the origin exactly
    X, Y = np.meshgrid(g, g)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    tol = 10.0 * h_fd
    terms, details = {}, {}
    worst = -np.inf
    for name, fn in fields.items():
        w = fn(pts)
        mod = np.linalg.norm(w, axis=1)
        keep = mod >= zero_tol
        jac = _fd_jacobian(fn, pts[keep], h_fd)
        grad_mod = _fd_jacobian(lambda p: np.linalg.norm(fn(p), axis=1)[:, None], pts[keep], h_fd)[:, 0, :]
        lhs = np.linalg.norm(grad_mod, axis=1)
        rhs = np.sqrt(np.einsum("pij,pij->p", jac, jac))
        viol = float(np.max(lhs - rhs)) if keep.any() else 0.0
        terms[name] = viol
        details[name] = {"skipped": int((~keep).sum()), "max_lhs": float(lhs.max(initial=0.0)),
                         "max_rhs": float(rhs.max(initial=0.0))}
        worst = max(worst, viol)
    return CheckReport(name="kato inequality", terms=terms, residual=float(worst), passed=bool(worst <= tol),
                       details={"h_fd": h_fd, "tolerance": tol, **details})


# -- trace estimate on a collar ----------------------------------------------------------------------


def _segment_mass(coords: np.ndarray) -> sp.csr_matrix:
    """P1 mass of a polyline given by ordered node coordinates."""
    L = np.linalg.norm(np.diff(coords, axis=0), axis=1)
    n = len(coords)
    main = np.zeros(n)
    main[:-1] += L / 3
    main[1:] += L / 3
    return sp.diags([L / 6, main, L / 6], [-1, 0, 1], format="csr")


def verify_trace_estimate(
    fem: FemSystem,
    edge: int,
    end: str = "init",
    a: float | None = None,
    *,
    n_eig: int = 20,
    n_random: int = 50,
    seed: int = 0,
) -> CheckReport:
    """``||u||^2_Z <= a ||du||^2_{X'} + (2/a) ||u||^2_{X'}`` where ``Z`` is a tube
    end (a port) and ``X'`` the part of the tube within depth ``a`` of it."""
    mesh = fem.mesh
    tube = mesh.tubes[edge]
    length = tube.length
    hx = length / tube.nx
    max_cols = tube.nx // 2
    if a is None:
        cols = max_cols
    else:
        cols = int(round(a / hx))
        if cols < 1 or abs(cols * hx - a) > 1e-9 * max(a, 1.0):
            raise CollarTooShallow(f"depth {a} is not a whole number of tube columns (spacing {hx:.6g})")
        if cols > max_cols:
            raise CollarTooShallow(f"depth {a} exceeds half the tube length {length / 2:.6g}")
    a = cols * hx
    nodes = tube.nodes if end == "init" else tube.nodes[::-1]
    # triangles of the first `cols` columns
    ny = tube.ny
    col_nodes = set(nodes[: cols + 1].ravel().tolist())
    tri = mesh.triangles
    in_collar = np.all(np.isin(tri, list(col_nodes)), axis=1) & mesh.region_mask(f"edge:{edge}")
    Kc = _scatter(tri[in_collar], fem.Ke[in_collar], fem.n)
    Mc = _scatter(tri[in_collar], fem.Me[in_collar], fem.n)
    z = nodes[0]
    y = mesh.eps * (np.arange(ny + 1) / ny - 0.5)
    Mz_local = _segment_mass(np.column_stack([np.zeros(ny + 1), y]))
    P = sp.csr_matrix((np.ones(ny + 1), (np.arange(ny + 1), z)), shape=(ny + 1, fem.n))
    Mz = (P.T @ Mz_local @ P).tocsr()

    vecs = []
    res = smallest_eigenpairs(fem.K, fem.M, min(n_eig, fem.n - 1), seed=seed)
    vecs.extend(res.eigenvectors.T)
    for i in range(n_random):
        x = fem.resolvent(seeded_vector(fem.n, seed + 1 + i))
        vecs.append(x / math.sqrt(x @ (fem.M @ x)))
    worst, n_viol = -np.inf, 0
    for x in vecs:
        lhs = x @ (Mz @ x)
        rhs = a * (x @ (Kc @ x)) + (2.0 / a) * (x @ (Mc @ x))
        rel = (lhs - rhs) / max(rhs, 1e-300)
        worst = max(worst, rel)
        n_viol += int(lhs > rhs * (1 + 1e-12))
    return CheckReport(
        name=f"collar trace estimate, edge {edge} ({end} end)",
        terms={"a": a, "vectors": len(vecs), "violations": n_viol},
        residual=float(worst),
        passed=n_viol == 0,
    )


# -- supersymmetry on the metric graph ------------------------------------------------------------------


def oneform_gradient_matrix(grid: MGGrid) -> tuple[sp.csr_matrix, np.ndarray]:
    """Cellwise-constant derivative ``D`` (cells x continuous dofs) and cell lengths."""
    rows, cols, vals, lens = [], [], [], []
    c = 0
    for e in range(grid.graph.n_edges):
        dofs = grid.edge_dofs(e)
        h = grid.spacing(e)
        for i in range(grid.counts[e]):
            rows += [c, c]
            cols += [dofs[i], dofs[i + 1]]
            vals += [-1.0 / h, 1.0 / h]
            lens.append(h)
            c += 1
    D = sp.csr_matrix((vals, (rows, cols)), shape=(c, grid.n_dofs))
    return D, np.array(lens)


def verify_supersymmetry(g: MetricGraph, h: float = 0.05, k: int | None = None, rtol: float = 1e-8) -> CheckReport:
    """Nonzero spectra of ``d*d`` (functions) and ``d d*`` (1-forms) coincide; kernels
    have dimensions ``b0`` and ``b1`` and their difference is the Euler index."""
    grid = MGGrid.from_h(g, h)
    D, lens = oneform_gradient_matrix(grid)
    from .mg_operators import assemble_kirchhoff_laplacian

    pair = assemble_kirchhoff_laplacian(g, grid=grid)
    M0 = pair.M.toarray()
    M1h = np.sqrt(lens)
    K = (D.T @ sp.diags(lens) @ D).toarray()
    import scipy.linalg as sla

    lam0 = sla.eigh(K, M0, eigvals_only=True)
    # d d* in the symmetric form M1^{1/2} D M0^{-1} D^T M1^{1/2}
    B = M1h[:, None] * D.toarray()
    lam1 = np.linalg.eigvalsh(B @ np.linalg.solve(M0, B.T))
    scale = max(lam0.max(), 1.0)
    zt = 1e-9 * scale
    ker0 = int(np.sum(np.abs(lam0) < zt))
    ker1 = int(np.sum(np.abs(lam1) < zt))
    nz0 = np.sort(lam0[np.abs(lam0) >= zt])
    nz1 = np.sort(lam1[np.abs(lam1) >= zt])
    same_len = len(nz0) == len(nz1)
    mism = float(np.max(np.abs(nz0 - nz1) / nz0)) if same_len and len(nz0) else (0.0 if same_len else math.inf)
    b0, b1 = betti_numbers(g)
    harm = harmonic_oneform_basis(g, grid=grid)
    idx_ok = (ker0 - ker1) == euler_index(g) == b0 - b1
    passed = same_len and mism <= rtol and ker0 == b0 and ker1 == b1 and idx_ok and len(harm) == b1
    if k is not None:
        nz0, nz1 = nz0[:k], nz1[:k]
    return CheckReport(
        name="supersymmetry (d*d versus d d*)",
        terms={"kernel_dims": [ker0, ker1], "betti": [b0, b1], "euler_index": euler_index(g),
               "n_nonzero": int(len(nz0)), "harmonic_forms": len(harm)},
        residual=mism,
        passed=bool(passed),
        details={"lowest_nonzero_functions": nz0[:5].tolist(), "lowest_nonzero_forms": nz1[:5].tolist()},
    )


# -- homothety scaling -------------------------------------------------------------------------------------


def verify_scaling(template: VertexTemplate, eps: float = 0.2, h_unscaled: float = 0.1, rtol: float = 1e-6) -> CheckReport:
    """Exact-homothety checks on an ``eps``-scaled template mesh versus ``eps/2``:

    node coordinates halve, areas scale by ``eps^2``, the Dirichlet energy of
    ``u(x/eps)`` is scale invariant, Neumann eigenvalues scale by ``eps^-2``
    and boundary curvature by ``1/eps``.
    """
    n_port = max(int(math.ceil(1.0 / h_unscaled - 1e-9)), 1)
    tm = mesh_template(template, h_unscaled, n_port)
    out = {}

    def system(s):
        xy = s * tm.points[tm.triangles]
        Ke, Me = p1_element_matrices(xy)
        n = len(tm.points)
        return _scatter(tm.triangles, Ke, n), _scatter(tm.triangles, Me, n)

    K1, M1 = system(1.0)
    Ka, Ma = system(eps)
    Kb, Mb = system(eps / 2)
    ones = np.ones(len(tm.points))
    area1 = ones @ M1 @ ones
    out["coords_half"] = float(np.max(np.abs((eps / 2) * tm.points - 0.5 * (eps * tm.points))))
    out["area_ratio"] = float((ones @ Ma @ ones) / (eps ** 2 * area1)) - 1.0
    u = np.sin(tm.points[:, 0]) * np.cos(2 * tm.points[:, 1])  # u(x/eps) sampled at the scaled nodes
    out["energy_ratio"] = float((u @ Ka @ u) / (u @ K1 @ u)) - 1.0
    out["mass_ratio"] = float((u @ Ma @ u) / (eps ** 2 * (u @ M1 @ u))) - 1.0
    la = smallest_eigenpairs(Ka, Ma, 3).eigenvalues
    lb = smallest_eigenpairs(Kb, Mb, 3).eigenvalues
    out["lambda2_ratio"] = float(lb[1] / (4.0 * la[1])) - 1.0
    P, _, _ = template.sample_boundary(h_unscaled, n_port)
    k1 = menger_curvature(P)
    ke = menger_curvature(eps * P)
    big = np.abs(k1) > 1e-9
    out["curvature_ratio"] = float(np.max(np.abs(ke[big] * eps / k1[big] - 1.0))) if big.any() else 0.0
    res = max(abs(v) for v in out.values())
    return CheckReport(name=f"homothety scaling of template {template.name!r}", terms=out, residual=res,
                       passed=bool(res <= rtol))


def verify_mesh_homothety(build, eps: float, rtol: float = 1e-6) -> CheckReport:
    """Rebuilding a graph-like mesh at ``eps/2`` (with ``h`` proportional to ``eps``)
    halves every vertex-region coordinate in the template frame and quarters the
    vertex-region areas."""
    m1 = build(eps)
    m2 = build(eps / 2)
    terms = {}
    worst = 0.0
    for v in range(m1.graph.n_vertices):
        p1 = eps * m1.template_points[v]
        p2 = (eps / 2) * m2.template_points[v]
        if p1.shape != p2.shape:
            raise AssertionError("template meshes differ between the two scales")
        d = float(np.max(np.abs(p2 - 0.5 * p1)))
        ar = m2.region_area(f"vertex:{v}") / m1.region_area(f"vertex:{v}") * 4.0 - 1.0
        terms[f"vertex:{v}"] = {"coord_dev": d, "area_ratio_dev": ar}
        worst = max(worst, d / eps, abs(ar))
    return CheckReport(name="mesh homothety", terms=terms, residual=worst, passed=bool(worst <= rtol))
