import math

import numpy as np
from scipy.optimize import brentq

from fatgraph.metric_graph import cycle_graph, single_edge, star_graph, theta_graph
from fatgraph.secular import BondScattering, oracle_first, secular_roots


def _two_vertex_oracle(lengths, count):
    """Independent oracle for graphs with two vertices joined by parallel edges.

    With vertex values a, b the Kirchhoff conditions reduce to
    ``sum cot(k l_j) = +-sum csc(k l_j)``; both sides are multiplied by the
    product of the sines to remove poles.  That product adds spurious
    roots where a sine vanishes, so only values with every ``sin(k l_j)``
    bounded away from zero are returned.
    """
    L = np.asarray(lengths)

    def G(k, sgn):
        kl = np.multiply.outer(np.atleast_1d(k), L)
        s, c = np.sin(kl), np.cos(kl)
        out = sum((c[:, j] - sgn) * np.prod(np.delete(s, j, axis=1), axis=1) for j in range(len(L)))
        return out if np.ndim(k) else float(out[0])

    roots = []
    ks = np.linspace(1e-3, 20.0, 200001)
    for sgn in (1.0, -1.0):
        v = G(ks, sgn)
        for i in np.nonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0)[0]:
            roots.append(brentq(G, ks[i], ks[i + 1], args=(sgn,), xtol=1e-14))
    roots = np.array([k for k in roots if np.min(np.abs(np.sin(k * L))) > 1e-3])
    return np.sort(roots ** 2)[:count]


def _generic(vals, lengths):
    k = np.sqrt(vals)
    return vals[np.min(np.abs(np.sin(np.multiply.outer(k, lengths))), axis=1) > 1e-3]


def test_single_edge_pi():
    vals = oracle_first(single_edge(math.pi), 6)
    assert np.allclose(vals, [0, 1, 4, 9, 16, 25], atol=1e-10)


def test_cycle_double_eigenvalues():
    vals = oracle_first(cycle_graph(), 7)
    assert np.allclose(vals, [0, 1, 1, 4, 4, 9, 9], atol=1e-10)


def test_equilateral_star():
    vals = oracle_first(star_graph(), 6)
    k = np.pi * np.array([0, 0.5, 0.5, 1.0, 1.5, 1.5])
    assert np.allclose(vals, k ** 2, atol=1e-9)


def test_four_star_triple_root():
    roots = dict((round(k, 8), m) for k, m in secular_roots(star_graph((1.0,) * 4), 2.0))
    assert roots[round(np.pi / 2, 8)] == 3


def test_theta_against_independent_oracle():
    L = (1.0, 1.5, 2.0)
    vals = _generic(oracle_first(theta_graph(), 20, include_zero=False), L)
    ref = _two_vertex_oracle(L, len(vals))
    assert len(vals) >= 8
    assert np.allclose(vals, ref, rtol=1e-9)


def test_scattering_matrix_is_unitary():
    bs = BondScattering(theta_graph())
    U = bs.unitary(1.3)
    assert np.allclose(U.conj().T @ U, np.eye(U.shape[0]), atol=1e-12)
    assert np.allclose(bs.S @ bs.S, np.eye(bs.S.shape[0]), atol=1e-12)
