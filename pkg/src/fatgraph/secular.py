"""Exact Kirchhoff eigenvalues from the bond-scattering secular equation.

A bond is an edge with a direction of travel.  At a vertex of degree d the
Kirchhoff condition scatters an incoming wave into each outgoing bond with
amplitude ``2/d``, minus one for reflection into the reversed bond.  With
``U(k) = S diag(exp(i k l_b))`` the nonzero eigenvalues ``k^2`` are exactly
the ``k > 0`` where ``I - U(k)`` is singular, with multiplicity equal to its
nullity.  Zero is an eigenvalue with multiplicity ``b0`` (constants).

Simple roots are sign changes of the real-valued function

    Z(k) = Re( det(I - U(k)) * exp(-i k L) / s0 ),   s0^2 = det S,

where ``L`` is the total length.  Roots of even multiplicity are touch
points of ``Z`` and are located as local minima of the smallest singular
value of ``I - U(k)``.  Every root is refined on the eigenphase of ``U(k)``
closest to zero, which increases strictly with ``k`` and crosses zero
transversally at roots of any multiplicity.
"""

from __future__ import annotations

import cmath
import math

import numpy as np
from scipy.optimize import brentq

from .errors import RootBracketingFailure
from .metric_graph import MetricGraph, betti_numbers

_ROOT_XTOL = 1e-13
_NULL_TOL = 1e-7


class BondScattering:
    """Bond scattering matrix of a finite metric graph with Kirchhoff vertices."""

    def __init__(self, g: MetricGraph):
        g.require_finite()
        self.graph = g
        E = g.n_edges
        # bond 2e runs init -> term, bond 2e+1 runs term -> init
        start = np.empty(2 * E, dtype=int)
        end = np.empty(2 * E, dtype=int)
        for e in g.edges:
            start[2 * e.index], end[2 * e.index] = e.init, e.term
            start[2 * e.index + 1], end[2 * e.index + 1] = e.term, e.init
        deg = np.array(g.degrees)
        n = 2 * E
        S = np.zeros((n, n))
        for b in range(n):
            for bp in range(n):
                if end[bp] == start[b]:
                    S[b, bp] = 2.0 / deg[start[b]] - (1.0 if b == (bp ^ 1) else 0.0)
        self.S = S
        self.bond_lengths = np.repeat(g.lengths, 2)
        self.total_length = g.total_length
        self._s0 = cmath.sqrt(complex(np.linalg.det(S)))

    def unitary(self, k: float) -> np.ndarray:
        return self.S * np.exp(1j * k * self.bond_lengths)[None, :]

    def secular(self, k: float) -> float:
        n = len(self.bond_lengths)
        z = np.linalg.det(np.eye(n) - self.unitary(k)) * cmath.exp(-1j * k * self.total_length)
        return float((z / self._s0).real)

    def singular_values(self, k: float) -> np.ndarray:
        n = len(self.bond_lengths)
        return np.linalg.svd(np.eye(n) - self.unitary(k), compute_uv=False)

    def smallest_singular(self, k: float) -> float:
        return float(self.singular_values(k)[-1])

    def nearest_phase(self, k: float) -> float:
        """Signed eigenphase of ``U(k)`` closest to zero."""
        ph = np.angle(np.linalg.eigvals(self.unitary(k)))
        return float(ph[np.argmin(np.abs(ph))])

    def nullity(self, k: float, tol: float = _NULL_TOL) -> int:
        sv = self.singular_values(k)
        return int(np.sum(sv <= tol * max(1.0, sv[0])))


def secular_roots(g: MetricGraph, k_max: float, n_steps: int = 2000, k_min: float = 1e-6) -> list[tuple[float, int]]:
    """Roots ``k`` in ``(0, k_max]`` with their multiplicities."""
    if not k_max > k_min:
        return []
    bs = BondScattering(g)
    grid = np.linspace(k_min, k_max, n_steps + 1)
    z = np.array([bs.secular(k) for k in grid])
    smin = np.array([bs.smallest_singular(k) for k in grid])
    found: list[float] = []

    def refine(a, b):
        # the eigenphase crosses zero linearly even where Z is flat (multiple roots)
        pa, pb = bs.nearest_phase(a), bs.nearest_phase(b)
        f = bs.nearest_phase if (pa < 0.0 < pb and pb - pa < 1.0) else bs.secular
        try:
            return brentq(f, a, b, xtol=_ROOT_XTOL, rtol=4 * np.finfo(float).eps)
        except (ValueError, RuntimeError) as exc:
            raise RootBracketingFailure(f"root refinement failed: {exc}", (a, b)) from exc

    for i in range(n_steps):
        if z[i] == 0.0:
            found.append(grid[i])
        elif z[i] * z[i + 1] < 0:
            found.append(refine(grid[i], grid[i + 1]))
    if z[-1] == 0.0:
        found.append(grid[-1])

    # touch points: local minima of the smallest singular value without a sign change
    for i in range(1, n_steps):
        if smin[i] <= smin[i - 1] and smin[i] <= smin[i + 1]:
            a, b = grid[i - 1], grid[i + 1]
            if any(a - 1e-9 <= r <= b + 1e-9 for r in found):
                continue
            pa, pb = bs.nearest_phase(a), bs.nearest_phase(b)
            if pa < 0.0 < pb and pb - pa < 1.0:
                found.append(refine(a, b))

    found.sort()
    roots: list[tuple[float, int]] = []
    for r in found:
        if roots and abs(r - roots[-1][0]) <= 1e-8 * max(1.0, r):
            continue
        mult = bs.nullity(r)
        if mult == 0:
            raise RootBracketingFailure(f"no null vector of I - U at k = {r:.12g}", (r, r))
        roots.append((r, mult))
    return roots


def secular_eigenvalues_oracle(g: MetricGraph, k_max: float, n_steps: int = 2000) -> np.ndarray:
    """All Kirchhoff eigenvalues ``lam = k^2`` with ``k <= k_max``, repeated by multiplicity."""
    b0, _ = betti_numbers(g)
    vals = [0.0] * b0
    for k, mult in secular_roots(g, k_max, n_steps=n_steps):
        vals.extend([k * k] * mult)
    return np.array(sorted(vals))


def oracle_first(g: MetricGraph, count: int, include_zero: bool = True) -> np.ndarray:
    """The ``count`` smallest eigenvalues, widening the search window as needed."""
    k_max = max(4.0, 2.0 * math.pi * (count + 1) / g.total_length)
    while True:
        vals = secular_eigenvalues_oracle(g, k_max)
        if not include_zero:
            vals = vals[vals > 0]
        if len(vals) > count:
            return vals[:count]
        k_max *= 1.5
