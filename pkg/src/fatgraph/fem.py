"""P1 finite elements for the Neumann Laplacian on a triangulated domain."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateTriangle
from .linalg import EigResult, Factorized
from .linalg import smallest_eigenpairs as _smallest
from .mesh import GraphLikeMesh

_MASS_REF = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


def p1_element_matrices(tri_xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Local stiffness and mass matrices, shape ``(T, 3, 3)`` each."""
    x = tri_xy
    e1 = x[:, 1] - x[:, 0]
    e2 = x[:, 2] - x[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    area = 0.5 * np.abs(det)
    scale = np.einsum("ij,ij->i", e1, e1) + np.einsum("ij,ij->i", e2, e2)
    bad = area <= 1e-14 * scale
    if np.any(bad):
        raise DegenerateTriangle(f"{int(bad.sum())} triangle(s) with (near) zero area")
    # gradients of the barycentric coordinates
    grads = np.empty_like(x)
    for k in range(3):
        a = x[:, (k + 1) % 3]
        b = x[:, (k + 2) % 3]
        d = b - a
        grads[:, k, 0] = d[:, 1] / det
        grads[:, k, 1] = -d[:, 0] / det
    Ke = area[:, None, None] * np.einsum("tik,tjk->tij", grads, grads)
    Me = area[:, None, None] * _MASS_REF[None]
    return Ke, Me


def _scatter(tris: np.ndarray, local: np.ndarray, n: int) -> sp.csr_matrix:
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    return A


@dataclass
class FemSystem:
    """Stiffness/mass pair of the Neumann Laplacian plus per-region pieces.

    Besides the conforming space (one dof per mesh node) the system exposes
    a *broken* space in which every vertex region and every tube has its own
    copy of the nodes on its boundary.  Identification maps into functions
    that jump across ports live there; ``gather`` copies a conforming vector
    into it and ``broken_mass`` is its exact L2 Gram matrix.
    """

    mesh: GraphLikeMesh
    K: sp.csr_matrix
    M: sp.csr_matrix
    Ke: np.ndarray = field(repr=False)
    Me: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.K.shape[0]

    def region_matrices(self, region: str) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        mask = self.mesh.region_mask(region)
        tris = self.mesh.triangles[mask]
        return _scatter(tris, self.Ke[mask], self.n), _scatter(tris, self.Me[mask], self.n)

    # -- broken space ------------------------------------------------------------------
    @cached_property
    def blocks(self) -> list[tuple[str, np.ndarray]]:
        """``(name, node ids)`` of every block: vertex regions, then tubes."""
        out = [(f"vertex:{v}", np.asarray(ids)) for v, ids in enumerate(self.mesh.vertex_nodes)]
        for t in self.mesh.tubes:
            out.append((f"edge:{t.edge}", t.nodes.ravel()))
        return out

    @cached_property
    def block_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([len(ids) for _, ids in self.blocks])])

    @property
    def n_broken(self) -> int:
        return int(self.block_offsets[-1])

    @cached_property
    def gather(self) -> sp.csr_matrix:
        cols = np.concatenate([ids for _, ids in self.blocks])
        rows = np.arange(len(cols))
        return sp.csr_matrix((np.ones(len(cols)), (rows, cols)), shape=(len(cols), self.n))

    @cached_property
    def broken_mass(self) -> sp.csr_matrix:
        mats = []
        for name, ids in self.blocks:
            mask = self.mesh.region_mask(name)
            local = np.full(self.n, -1)
            local[ids] = np.arange(len(ids))
            tris = local[self.mesh.triangles[mask]]
            if np.any(tris < 0):
                raise AssertionError(f"block {name} does not contain all of its triangle nodes")
            mats.append(_scatter(tris, self.Me[mask], len(ids)))
        return sp.block_diag(mats, format="csr")

    def tube_slice(self, e: int) -> slice:
        b = self.mesh.graph.n_vertices + e
        return slice(int(self.block_offsets[b]), int(self.block_offsets[b + 1]))

    # -- solves ----------------------------------------------------------------------------
    @cached_property
    def resolvent_factor(self) -> Factorized:
        """LU of ``K + M``: the Galerkin form of ``(Laplacian + 1)``."""
        return Factorized(self.K + self.M)

    def resolvent(self, b: np.ndarray) -> np.ndarray:
        """Conforming vector ``(K + M)^{-1} M b``."""
        return self.resolvent_factor.solve(self.M @ b)

    def broken_resolvent(self, f: np.ndarray) -> np.ndarray:
        """Resolvent on the broken space, ``E (K + M)^{-1} E^T M_b f``."""
        return self.gather @ self.resolvent_factor.solve(self.gather.T @ (self.broken_mass @ f))


def assemble_neumann(mesh: GraphLikeMesh) -> FemSystem:
    Ke, Me = p1_element_matrices(mesh.tri_xy)
    n = mesh.n_nodes
    K = _scatter(mesh.triangles, Ke, n)
    M = _scatter(mesh.triangles, Me, n)
    K = (0.5 * (K + K.T)).tocsr()
    M = (0.5 * (M + M.T)).tocsr()
    return FemSystem(mesh, K, M, Ke, Me)


def smallest_eigenpairs(sys: FemSystem, k: int, sigma: float | None = None, *, seed: int = 0) -> EigResult:
    return _smallest(sys.K, sys.M, k, sigma, seed=seed)


def rayleigh_region(sys: FemSystem, x: np.ndarray, region: str) -> tuple[float, float]:
    """``(x^T K_region x, x^T M_region x)``."""
    Kr, Mr = sys.region_matrices(region)
    return float(x @ (Kr @ x)), float(x @ (Mr @ x))


def export_coo(A, path) -> None:
    """Write ``row col value`` lines of a sparse matrix."""
    C = sp.coo_matrix(A)
    order = np.lexsort((C.col, C.row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{C.shape[0]} {C.shape[1]} {C.nnz}\n")
        for r, c, v in zip(C.row[order], C.col[order], C.data[order]):
            fh.write(f"{r} {c} {v:.17g}\n")
