"""Numerical comparison of metric graphs with thin graph-like domains."""

from .constants import compute_constants, delta_eps, delta_eps_prime
from .errors import FatGraphError
from .fem import assemble_neumann
from .harness import SweepConfig, run_sweep
from .identification import build_J0, defect_norms_laplacian, embedded_defects
from .mesh import build_abstract_space, build_embedded_space, default_templates
from .metric_graph import MetricGraph, betti_numbers, build_graph, euler_index, load_graph
from .mg_operators import assemble_kirchhoff_laplacian, kirchhoff_spectrum
from .secular import oracle_first

__version__ = "0.1.0"

__all__ = [
    "FatGraphError",
    "MetricGraph",
    "SweepConfig",
    "assemble_kirchhoff_laplacian",
    "assemble_neumann",
    "betti_numbers",
    "build_J0",
    "build_abstract_space",
    "build_embedded_space",
    "build_graph",
    "compute_constants",
    "default_templates",
    "defect_norms_laplacian",
    "delta_eps",
    "delta_eps_prime",
    "embedded_defects",
    "euler_index",
    "kirchhoff_spectrum",
    "load_graph",
    "oracle_first",
    "run_sweep",
]
