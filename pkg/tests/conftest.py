import math

import numpy as np
import pytest
from hypothesis import strategies as st

from fatgraph.metric_graph import cycle_graph, single_edge, star_graph, theta_graph



def random_graph_spec(rng: np.random.Generator, max_vertices: int = 8, max_extra: int = 4) -> dict:
    """Connected graph: random spanning tree plus extra (possibly parallel) edges."""
    n = int(rng.integers(2, max_vertices + 1))
    edges = []
    for v in range(1, n):
        edges.append((int(rng.integers(0, v)), v))
    for _ in range(int(rng.integers(0, max_extra + 1))):
        a, b = rng.choice(n, size=2, replace=False)
        edges.append((int(a), int(b)))
    return {
        "vertices": [{"id": i} for i in range(n)],
        "edges": [{"id": k, "init": a, "term": b, "length": float(rng.uniform(0.5, 2.0))}
                  for k, (a, b) in enumerate(edges)],
    }


@st.composite
def graph_specs(draw, max_vertices=8, max_extra=4):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_graph_spec(np.random.default_rng(seed), max_vertices, max_extra)


TEST_GRAPHS = {
    "single_edge_pi": lambda: single_edge(math.pi),
    "cycle": cycle_graph,
    "star3": star_graph,
    "theta": theta_graph,
}


@pytest.fixture(params=sorted(TEST_GRAPHS))
def test_graph(request):
    return TEST_GRAPHS[request.param]()


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: dict[int, str] = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(ACCEPTANCE[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
