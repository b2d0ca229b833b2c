import json

import numpy as np
import pytest

import fatgraph.harness as harness
from fatgraph.errors import MeshQualityFailure
from fatgraph.harness import CSV_HEADER, SweepConfig, cluster_errors, fit_slope, resolve_graph, run_sweep
from fatgraph.metric_graph import star_graph


def test_config_validation():
    with pytest.raises(ValueError):
        SweepConfig(graph="builtin:star3", eps=(0.1, 0.2))
    with pytest.raises(ValueError):
        SweepConfig(graph="builtin:star3", eps=(1.5,))
    with pytest.raises(ValueError):
        SweepConfig(graph="builtin:star3", variant="other")
    with pytest.raises(ValueError):
        SweepConfig.from_dict({"graph": "builtin:star3", "typo": 1})
    cfg = SweepConfig.from_dict({"graph": "builtin:single_edge", "variant": {"embedded": 0.2}})
    assert cfg.variant == "embedded" and cfg.tau == 0.2
    assert cfg.h(0.4) == 0.02 and cfg.h(0.05) == 0.0125


def test_builtin_data():
    assert resolve_graph("builtin:theta").n_edges == 3
    for name in ("sweep_star3", "sweep_theta", "sweep_dumbbell_embedded"):
        SweepConfig.load(harness.data_path(f"configs/{name}.json"))


def test_cluster_errors_use_cluster_means():
    mg = np.array([1.0, 1.0, 4.0])
    tube = np.array([0.8, 0.9, 3.0])
    assert np.allclose(cluster_errors(mg, tube), [0.15, 0.15, 1.0])


def test_fit_slope():
    eps = np.array([0.4, 0.2, 0.1])
    assert abs(fit_slope(eps, 3 * eps ** 0.5) - 0.5) < 1e-12
    assert fit_slope([0.1], [1.0]) is None


def test_single_point_sweep():
    res = run_sweep(SweepConfig(graph=star_graph(), eps=(0.2,), k=3), write=False)
    assert len(res.rows) == 1 and res.slopes == {}
    lines = res.csv_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 4


def test_row_failure_is_recorded(monkeypatch):
    real = harness.build_abstract_space

    def flaky(g, templates, eps, h, tau=0.25):
        if eps == 0.3:
            raise MeshQualityFailure("synthetic")
        return real(g, templates, eps, h, tau=tau)

    monkeypatch.setattr(harness, "build_abstract_space", flaky)
    res = run_sweep(SweepConfig(graph=star_graph(), eps=(0.4, 0.3, 0.2), k=2), write=False)
    assert [r.eps for r in res.failures] == [0.3]
    assert 0.3 in res.excluded
    assert "0.3," not in res.csv_text()
    assert res.slopes["d3"] is not None


def test_outputs_are_deterministic(tmp_path):
    cfgs = [SweepConfig(graph="builtin:single_edge", eps=(0.4, 0.2), k=3, out_dir=str(tmp_path / d), name="s")
            for d in ("a", "b")]
    for c in cfgs:
        run_sweep(c)
    for f in ("s.csv", "s_eig.svg", "s_d3.svg"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    summary = json.loads((tmp_path / "a" / "s.json").read_text())
    assert summary["bound_violations"] == [] and "constants" in summary


def test_embedded_variant_rows():
    res = run_sweep(SweepConfig(graph="builtin:single_edge", eps=(0.2,), k=2, variant="embedded"), write=False)
    assert not res.failures
    r = res.rows[0]
    # embedded tubes are shorter, so the eigenvalues sit above the abstract ones
    abstract = run_sweep(SweepConfig(graph="builtin:single_edge", eps=(0.2,), k=2), write=False).rows[0]
    assert r.tube_values[0] != abstract.tube_values[0]
