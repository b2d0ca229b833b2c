"""Metric graphs: combinatorial graphs whose edges are intervals of given length.

Vertices and edges receive dense integer indices in the order in which they
appear in the input description; those indices are used as block indices by
every assembly routine downstream.  Edge ``e`` is parametrised by
``s in [0, length]`` running from ``init`` (s = 0) to ``term`` (s = length),
and this orientation is the only one used anywhere in the package.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import (
    DisconnectedGraph,
    EmbeddingLengthMismatch,
    GraphError,
    InfiniteEdge,
    LoopEdge,
    NonPositiveLength,
)

_EMBED_RTOL = 1e-9


@dataclass(frozen=True)
class Edge:
    index: int
    label: Any
    init: int
    term: int | None  # None for a semi-infinite edge
    length: float

    @property
    def finite(self) -> bool:
        return math.isfinite(self.length)


@dataclass(frozen=True)
class MetricGraph:
    vertex_labels: tuple
    edges: tuple[Edge, ...]
    embedding: np.ndarray | None = field(default=None, compare=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertex_labels)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def lengths(self) -> np.ndarray:
        return np.array([e.length for e in self.edges], dtype=float)

    @property
    def ell0(self) -> float:
        return float(min(e.length for e in self.edges))

    @property
    def total_length(self) -> float:
        return float(sum(e.length for e in self.edges))

    @property
    def is_finite(self) -> bool:
        return all(e.finite for e in self.edges)

    def require_finite(self) -> None:
        if not self.is_finite:
            raise InfiniteEdge("numerical operations need every edge length to be finite")

    def incident(self, v: int) -> list[int]:
        """Indices of the edges adjacent to vertex ``v``, ascending."""
        return [e.index for e in self.edges if e.init == v or e.term == v]

    def degree(self, v: int) -> int:
        return len(self.incident(v))

    @property
    def degrees(self) -> list[int]:
        return [self.degree(v) for v in range(self.n_vertices)]

    def incidence_matrix(self) -> np.ndarray:
        """Oriented incidence matrix: -1 at the initial vertex, +1 at the terminal one.

        Row ``v`` applied to edgewise constant 1-form values gives the sum of
        their oriented evaluations at ``v``.
        """
        B = np.zeros((self.n_vertices, self.n_edges))
        for e in self.edges:
            B[e.init, e.index] -= 1.0
            if e.term is not None:
                B[e.term, e.index] += 1.0
        return B

    def vertex_index(self, label) -> int:
        return self.vertex_labels.index(label)

    def to_dict(self) -> dict:
        verts = []
        for i, lab in enumerate(self.vertex_labels):
            item = {"id": lab}
            if self.embedding is not None:
                item["xy"] = [float(c) for c in self.embedding[i]]
            verts.append(item)
        edges = [
            {
                "id": e.label,
                "init": self.vertex_labels[e.init],
                "term": None if e.term is None else self.vertex_labels[e.term],
                "length": e.length if e.finite else "inf",
            }
            for e in self.edges
        ]
        return {"vertices": verts, "edges": edges}


def build_graph(spec: Mapping[str, Any]) -> MetricGraph:
    """Validate a graph description and return a :class:`MetricGraph`.

    ``spec`` has the layout of the graph JSON file::

        {"vertices": [{"id": ..., "xy": [x, y]?}, ...],
         "edges": [{"id": ..., "init": ..., "term": ..., "length": ...}, ...]}

    A length of ``"inf"`` (or ``float('inf')``) with ``term`` null denotes a
    semi-infinite edge.  If every vertex carries ``xy`` the graph is embedded
    and each edge must be a straight segment of its stated length.
    """
    vspecs = list(spec.get("vertices", []))
    especs = list(spec.get("edges", []))
    if not vspecs or not especs:
        raise GraphError("a metric graph needs at least one vertex and one edge")

    labels = tuple(v["id"] if isinstance(v, Mapping) else v for v in vspecs)
    if len(set(labels)) != len(labels):
        raise GraphError("duplicate vertex ids")
    index = {lab: i for i, lab in enumerate(labels)}

    edges = []
    for k, es in enumerate(especs):
        length = float(es["length"])
        if not length > 0:
            raise NonPositiveLength(f"edge {es.get('id', k)!r} has length {length}")
        init = es["init"]
        term = es.get("term")
        if init not in index or (term is not None and term not in index):
            raise GraphError(f"edge {es.get('id', k)!r} refers to an unknown vertex")
        if math.isfinite(length):
            if term is None:
                raise GraphError(f"finite edge {es.get('id', k)!r} needs a terminal vertex")
            if term == init:
                raise LoopEdge(f"edge {es.get('id', k)!r} starts and ends at {init!r}")
        elif term is not None:
            raise GraphError(f"semi-infinite edge {es.get('id', k)!r} cannot have a terminal vertex")
        edges.append(
            Edge(
                index=k,
                label=es.get("id", k),
                init=index[init],
                term=None if term is None else index[term],
                length=length,
            )
        )

    embedding = None
    has_xy = [isinstance(v, Mapping) and v.get("xy") is not None for v in vspecs]
    if any(has_xy):
        if not all(has_xy):
            raise GraphError("either all vertices or none carry coordinates")
        embedding = np.array([[float(c) for c in v["xy"]] for v in vspecs])
        for e in edges:
            if e.term is None:
                continue
            dist = float(np.linalg.norm(embedding[e.term] - embedding[e.init]))
            if abs(dist - e.length) > _EMBED_RTOL * max(1.0, e.length):
                raise EmbeddingLengthMismatch(
                    f"edge {e.label!r}: embedded distance {dist:.12g} != length {e.length:.12g}"
                )
        embedding.setflags(write=False)

    g = MetricGraph(vertex_labels=labels, edges=tuple(edges), embedding=embedding)
    for v in range(g.n_vertices):
        if g.degree(v) == 0:
            raise DisconnectedGraph(f"vertex {labels[v]!r} is isolated")
    if _components(g) != 1:
        raise DisconnectedGraph("the graph is not connected")
    return g


def load_graph(path: str | Path) -> MetricGraph:
    with open(path, encoding="utf-8") as fh:
        return build_graph(json.load(fh))


def _components(g: MetricGraph) -> int:
    parent = list(range(g.n_vertices))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for e in g.edges:
        if e.term is not None:
            a, b = find(e.init), find(e.term)
            if a != b:
                parent[max(a, b)] = min(a, b)
    return len({find(i) for i in range(g.n_vertices)})


def betti_numbers(g: MetricGraph) -> tuple[int, int]:
    """``(b0, b1)``: one component, ``|E| - |V| + 1`` independent cycles."""
    b0 = _components(g)
    return b0, g.n_edges - g.n_vertices + b0


def euler_index(g: MetricGraph) -> int:
    return g.n_vertices - g.n_edges


# -- a few graphs used throughout the tests and the command line -------------


def single_edge(length: float = 1.0) -> MetricGraph:
    return build_graph(
        {
            "vertices": [{"id": 0, "xy": [0.0, 0.0]}, {"id": 1, "xy": [length, 0.0]}],
            "edges": [{"id": 0, "init": 0, "term": 1, "length": length}],
        }
    )


def cycle_graph(lengths: Sequence[float] = (math.pi, math.pi)) -> MetricGraph:
    n = len(lengths)
    return build_graph(
        {
            "vertices": [{"id": i} for i in range(n)],
            "edges": [
                {"id": i, "init": i, "term": (i + 1) % n, "length": float(l)}
                for i, l in enumerate(lengths)
            ],
        }
    )


def star_graph(lengths: Sequence[float] = (1.0, 1.0, 1.0), embed: bool = True) -> MetricGraph:
    """Star with centre 0 and leaves 1..n; edges oriented centre -> leaf."""
    n = len(lengths)
    verts: list[dict] = [{"id": 0}]
    if embed:
        verts[0]["xy"] = [0.0, 0.0]
    for i, l in enumerate(lengths):
        item: dict = {"id": i + 1}
        if embed:
            ang = 2.0 * math.pi * i / n
            item["xy"] = [l * math.cos(ang), l * math.sin(ang)]
        verts.append(item)
    return build_graph(
        {
            "vertices": verts,
            "edges": [
                {"id": i, "init": 0, "term": i + 1, "length": float(l)}
                for i, l in enumerate(lengths)
            ],
        }
    )


def theta_graph(lengths: Sequence[float] = (1.0, 1.5, 2.0)) -> MetricGraph:
    return build_graph(
        {
            "vertices": [{"id": 0}, {"id": 1}],
            "edges": [
                {"id": i, "init": 0, "term": 1, "length": float(l)}
                for i, l in enumerate(lengths)
            ],
        }
    )
