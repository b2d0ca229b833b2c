import json

import numpy as np
import pytest
from hypothesis import given, settings

from fatgraph.errors import (DisconnectedGraph, EmbeddingLengthMismatch, GraphError, InfiniteEdge, LoopEdge,
                             NonPositiveLength)
from fatgraph.metric_graph import (betti_numbers, build_graph, cycle_graph, euler_index, load_graph, single_edge,
                                   star_graph, theta_graph)

from conftest import graph_specs


def test_standard_graphs_topology():
    assert betti_numbers(single_edge()) == (1, 0)
    assert betti_numbers(cycle_graph()) == (1, 1)
    assert betti_numbers(star_graph()) == (1, 0)
    assert betti_numbers(theta_graph()) == (1, 2)
    assert euler_index(theta_graph()) == -1


def test_star_orientation_and_degrees():
    g = star_graph()
    assert g.degrees == [3, 1, 1, 1]
    assert all(e.init == 0 for e in g.edges)
    assert g.ell0 == 1.0 and g.total_length == 3.0


def test_incidence_matrix_columns_sum_to_zero():
    B = theta_graph().incidence_matrix()
    assert np.allclose(B.sum(axis=0), 0)


@pytest.mark.parametrize(
    "spec, exc",
    [
        ({"vertices": [0, 1], "edges": [{"init": 0, "term": 1, "length": -1}]}, NonPositiveLength),
        ({"vertices": [0], "edges": [{"init": 0, "term": 0, "length": 1}]}, LoopEdge),
        ({"vertices": [0, 1, 2, 3], "edges": [{"init": 0, "term": 1, "length": 1},
                                               {"init": 2, "term": 3, "length": 1}]}, DisconnectedGraph),
        ({"vertices": [0, 1, 2], "edges": [{"init": 0, "term": 1, "length": 1}]}, DisconnectedGraph),
        ({"vertices": [0, 1], "edges": [{"init": 0, "term": 5, "length": 1}]}, GraphError),
        ({"vertices": [], "edges": []}, GraphError),
        ({"vertices": [{"id": 0, "xy": [0, 0]}, {"id": 1, "xy": [2, 0]}],
          "edges": [{"init": 0, "term": 1, "length": 1}]}, EmbeddingLengthMismatch),
    ],
)
def test_invalid_graphs(spec, exc):
    with pytest.raises(exc):
        build_graph(spec)


def test_semi_infinite_edge_is_representable_but_not_numeric():
    g = build_graph({"vertices": [0, 1], "edges": [{"init": 0, "term": 1, "length": 1},
                                                    {"init": 1, "term": None, "length": "inf"}]})
    assert not g.is_finite
    with pytest.raises(InfiniteEdge):
        g.require_finite()


def test_roundtrip(tmp_path):
    g = star_graph()
    p = tmp_path / "g.json"
    p.write_text(json.dumps(g.to_dict()))
    h = load_graph(p)
    assert h.to_dict() == g.to_dict()


@settings(max_examples=60, deadline=None)
@given(graph_specs())
def test_index_is_b0_minus_b1(spec):
    g = build_graph(spec)
    b0, b1 = betti_numbers(g)
    assert b0 == 1
    assert b1 == g.n_edges - g.n_vertices + 1
    assert euler_index(g) == b0 - b1
    # incidence rank equals |V| - b0 on a connected graph
    assert np.linalg.matrix_rank(g.incidence_matrix()) == g.n_vertices - b0
