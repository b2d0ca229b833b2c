"""Epsilon sweeps: tube spectra and identification defects against the metric graph."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .constants import ConstantsReport, compute_constants, delta_eps
from .errors import FatGraphError
from .fem import assemble_neumann, smallest_eigenpairs
from .identification import build_J0, defect_norms_laplacian, hausdorff_resolvent_distance
from .linalg import cluster_ids
from .mesh import _resolve_templates, build_abstract_space, build_embedded_space
from .metric_graph import MetricGraph, betti_numbers, build_graph, load_graph
from .mg_operators import MGGrid
from .secular import oracle_first
from .templates import VertexTemplate, load_template

CSV_HEADER = ["eps", "lambda_idx", "mg_value", "tube_value", "abs_err", "d1", "d2", "d3", "delta_eps", "pass"]
DEFAULT_EPS = (0.4, 0.3, 0.2, 0.15, 0.1, 0.07, 0.05)
H_CAP = 0.02
# extra eigenvalues beyond k so a multiplicity cluster is never cut at the boundary
_EXTRA = 4
_ZERO_DEFECT = 1e-12


def default_h(eps: float, cap: float = H_CAP) -> float:
    return min(eps / 4.0, cap)


def data_path(name: str) -> Path:
    """Path of a file shipped in the package data directory."""
    return Path(str(resources.files("fatgraph") / "data" / name))


def resolve_graph(spec: Any, base: Path | None = None) -> MetricGraph:
    """Graph from a ``MetricGraph``, an inline dict, a JSON path or ``builtin:<name>``."""
    if isinstance(spec, MetricGraph):
        return spec
    if isinstance(spec, dict):
        return build_graph(spec)
    s = str(spec)
    if s.startswith("builtin:"):
        return load_graph(data_path(f"graphs/{s[len('builtin:'):]}.json"))
    p = Path(s)
    if base is not None and not p.is_absolute():
        p = base / p
    return load_graph(p)


def resolve_templates(specs, base: Path | None = None) -> list[VertexTemplate] | None:
    if specs is None:
        return None
    out = []
    for s in specs:
        if isinstance(s, VertexTemplate):
            out.append(s)
            continue
        s = str(s)
        if s.startswith("builtin:"):
            out.append(load_template(data_path(f"templates/{s[len('builtin:'):]}.json")))
            continue
        p = Path(s)
        if base is not None and not p.is_absolute():
            p = base / p
        out.append(load_template(p))
    return out


@dataclass
class SweepConfig:
    graph: Any
    templates: Any = None
    eps: Sequence[float] = DEFAULT_EPS
    h_cap: float = H_CAP
    k: int = 8
    variant: str = "abstract"
    tau: float = 0.25
    out_dir: str | None = None
    seed: int = 0
    workers: int = 1
    defect_rtol: float = 1e-4
    name: str = "sweep"
    base_dir: str | None = None

    def __post_init__(self):
        self.eps = tuple(float(e) for e in self.eps)
        if not self.eps:
            raise ValueError("the eps list is empty")
        if any(not 0.0 < e <= 1.0 for e in self.eps):
            raise ValueError("eps values must lie in (0, 1]")
        if any(b >= a for a, b in zip(self.eps, self.eps[1:])):
            raise ValueError("eps values must be strictly decreasing")
        if self.variant not in ("abstract", "embedded"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.k < 1:
            raise ValueError("k must be positive")

    def h(self, eps: float) -> float:
        return default_h(eps, self.h_cap)

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | Path | None = None) -> "SweepConfig":
        d = dict(d)
        variant = d.get("variant", "abstract")
        if isinstance(variant, dict):  # {"embedded": tau}
            (variant, tau), = variant.items()
            d["tau"] = tau
        d["variant"] = variant
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if base_dir is not None:
            d.setdefault("base_dir", str(base_dir))
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "SweepConfig":
        p = Path(path)
        with open(p, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), base_dir=p.parent)


@dataclass
class SweepRow:
    eps: float
    h: float
    mg_values: list[float] = field(default_factory=list)
    tube_values: list[float] = field(default_factory=list)
    abs_err: list[float] = field(default_factory=list)
    d1: float = math.nan
    d2: float = math.nan
    d3: float = math.nan
    delta_eps: float = math.nan
    hausdorff: float = math.nan
    hausdorff_bound: float = math.nan
    truncation: float = math.nan
    converged: bool = True
    n_dofs: int = 0
    runtime: float = 0.0
    failure: str | None = None

    @property
    def defect_ok(self) -> bool:
        return max(self.d1, self.d2, self.d3) <= 2.0 * self.delta_eps

    @property
    def hausdorff_ok(self) -> bool:
        return self.hausdorff <= self.hausdorff_bound

    @property
    def ok(self) -> bool:
        return self.failure is None and self.defect_ok and self.hausdorff_ok


@dataclass
class SweepResult:
    config: SweepConfig
    rows: list[SweepRow]
    constants: ConstantsReport | None
    slopes: dict = field(default_factory=dict)
    monotone: dict = field(default_factory=dict)
    excluded: list[float] = field(default_factory=list)

    @property
    def failures(self) -> list[SweepRow]:
        return [r for r in self.rows if r.failure is not None]

    @property
    def bound_violations(self) -> list[float]:
        return [r.eps for r in self.rows if r.failure is None and not (r.defect_ok and r.hausdorff_ok)]

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        f = lambda x: "%.10g" % x
        for r in self.rows:
            if r.failure is not None:
                continue
            for i, (mg, tb, err) in enumerate(zip(r.mg_values, r.tube_values, r.abs_err), start=1):
                w.writerow([f(r.eps), i, f(mg), f(tb), f(err), f(r.d1), f(r.d2), f(r.d3), f(r.delta_eps),
                            "true" if r.ok else "false"])
        return buf.getvalue()

    def summary(self) -> dict:
        rows = []
        for r in self.rows:
            d = asdict(r)
            d.update(defect_ok=r.failure is None and r.defect_ok, hausdorff_ok=r.failure is None and r.hausdorff_ok)
            rows.append(d)
        return {
            "name": self.config.name,
            "eps": list(self.config.eps),
            "k": self.config.k,
            "variant": self.config.variant,
            "tau": self.config.tau,
            "seed": self.config.seed,
            "rows": rows,
            "slopes": self.slopes,
            "monotone": self.monotone,
            "excluded_from_fit": self.excluded,
            "failures": [{"eps": r.eps, "error": r.failure} for r in self.failures],
            "bound_violations": self.bound_violations,
        }


def cluster_errors(mg: np.ndarray, tube: np.ndarray) -> np.ndarray:
    """Per-index error after cluster-sum matching.

    Indices are grouped by the multiplicity clusters of the graph spectrum;
    within a cluster the mean of the tube eigenvalues is compared with the
    common graph eigenvalue, so small symmetry-breaking splits at finite
    eps do not scramble the index matching.
    """
    err = np.empty(len(mg))
    ids = cluster_ids(mg)
    for c in np.unique(ids):
        idx = ids == c
        err[idx] = abs(np.mean(tube[idx]) - np.mean(mg[idx]))
    return err


def fit_slope(eps: Sequence[float], values: Sequence[float]) -> float | None:
    """Least-squares slope of ``log(values)`` against ``log(eps)``; ``None`` if fewer than two usable points."""
    x = np.log(np.asarray(eps, dtype=float))
    y = np.asarray(values, dtype=float)
    keep = np.isfinite(y) & (y > 0)
    if keep.sum() < 2:
        return None
    return float(np.polyfit(x[keep], np.log(y[keep]), 1)[0])


def _mg_reference(g: MetricGraph, n: int) -> np.ndarray:
    """First ``n`` nonzero Kirchhoff eigenvalues from the secular oracle."""
    b0, _ = betti_numbers(g)
    vals = oracle_first(g, n + b0, include_zero=True)
    return np.asarray(vals[b0:], dtype=float)


def _run_row(g: MetricGraph, templates, eps: float, cfg: SweepConfig, consts: ConstantsReport, mg_ref: np.ndarray) -> SweepRow:
    t0 = time.perf_counter()
    h = cfg.h(eps)
    row = SweepRow(eps=eps, h=h)
    try:
        mesh = build_abstract_space(g, templates, eps, h, tau=cfg.tau)
        fem = assemble_neumann(mesh)
        if cfg.variant == "embedded":
            emesh = build_embedded_space(g, templates, eps, cfg.tau, h)
            spec_fem = assemble_neumann(emesh)
        else:
            spec_fem = fem
        row.n_dofs = spec_fem.n
        n_tot = len(mg_ref)
        res = smallest_eigenpairs(spec_fem, n_tot + 1, seed=cfg.seed)
        row.converged = bool(res.converged())
        tube = np.asarray(res.eigenvalues[1:], dtype=float)  # drop the constant mode
        err = cluster_errors(mg_ref, tube)
        k = cfg.k
        row.mg_values = mg_ref[:k].tolist()
        row.tube_values = tube[:k].tolist()
        row.abs_err = err[:k].tolist()

        grid = MGGrid(g, [t.nx for t in mesh.tubes])
        jmap = build_J0(g, grid, mesh, eps, fem=fem)
        row.d1, row.d2, row.d3 = defect_norms_laplacian(jmap, fem, rtol=cfg.defect_rtol, seed=cfg.seed)
        row.delta_eps = delta_eps(consts, eps)
        full_mg = np.concatenate([[0.0] * betti_numbers(g)[0], mg_ref])
        full_tube = np.asarray(res.eigenvalues, dtype=float)
        row.hausdorff = hausdorff_resolvent_distance(full_mg, full_tube)
        row.hausdorff_bound = math.sqrt(3.0) * 2.0 * row.delta_eps
        row.truncation = 1.0 / (min(full_mg.max(), full_tube.max()) + 1.0)
    except FatGraphError as exc:
        row.failure = f"{type(exc).__name__}: {exc}"
    row.runtime = time.perf_counter() - t0
    return row


def _row_task(args):
    return _run_row(*args)


def run_sweep(cfg: SweepConfig, *, write: bool = True) -> SweepResult:
    base = Path(cfg.base_dir) if cfg.base_dir else None
    g = resolve_graph(cfg.graph, base)
    templates = _resolve_templates(g, resolve_templates(cfg.templates, base), cfg.tau)
    consts = compute_constants(g, templates, tau=cfg.tau)
    mg_ref = _mg_reference(g, cfg.k + _EXTRA)

    tasks = [(g, templates, e, cfg, consts, mg_ref) for e in cfg.eps]
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            rows = list(ex.map(_row_task, tasks))
    else:
        rows = [_row_task(t) for t in tasks]
    rows.sort(key=lambda r: -r.eps)

    result = SweepResult(cfg, rows, consts)
    good = [r for r in rows if r.failure is None and r.converged]
    result.excluded = [r.eps for r in rows if r not in good]
    if len(good) >= 2:
        eps = [r.eps for r in good]
        eig = {str(i + 1): fit_slope(eps, [r.abs_err[i] for r in good]) for i in range(cfg.k)}
        result.slopes = {
            "eigenvalue": eig,
            "eigenvalue_min": min((s for s in eig.values() if s is not None), default=None),
            "d2": fit_slope(eps, [r.d2 for r in good]),
            "d3": fit_slope(eps, [r.d3 for r in good]),
        }
    ok_rows = [r for r in rows if r.failure is None]
    result.monotone = {
        str(i + 1): all(b.abs_err[i] <= a.abs_err[i] for a, b in zip(ok_rows, ok_rows[1:]))
        for i in range(cfg.k)
    }
    for key in ("d1", "d2", "d3"):
        # values at rounding level count as zero
        vals = [0.0 if getattr(r, key) < _ZERO_DEFECT else getattr(r, key) for r in ok_rows]
        result.monotone[key] = all(b <= a for a, b in zip(vals, vals[1:]))
    if write and cfg.out_dir:
        write_outputs(result, Path(cfg.out_dir))
    return result


def write_outputs(result: SweepResult, out: Path) -> dict[str, Path]:
    out.mkdir(parents=True, exist_ok=True)
    name = result.config.name
    paths = {"csv": out / f"{name}.csv", "json": out / f"{name}.json"}
    paths["csv"].write_text(result.csv_text(), encoding="utf-8")
    summary = result.summary()
    if result.constants is not None:
        summary["constants"] = result.constants.to_dict()
    paths["json"].write_text(json.dumps(summary, indent=2, default=float), encoding="utf-8")
    paths.update(write_plots(result, out))
    return paths


def write_plots(result: SweepResult, out: Path) -> dict[str, Path]:
    """Log-log SVG charts of eigenvalue errors and d3 against eps with a slope-1/2 guide."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    good = [r for r in result.rows if r.failure is None]
    if len(good) < 2:
        return {}
    eps = np.array([r.eps for r in good])
    name = result.config.name
    paths = {}
    with matplotlib.rc_context({"svg.hashsalt": "fatgraph", "svg.fonttype": "none"}):
        for key, series, ylabel in (
            ("eig_plot", {f"k={i + 1}": [r.abs_err[i] for r in good] for i in range(min(5, result.config.k))},
             "|lambda_k(eps) - lambda_k(0)|"),
            ("d3_plot", {"d3": [r.d3 for r in good], "2 delta_eps": [2 * r.delta_eps for r in good]}, "norm"),
        ):
            fig, ax = plt.subplots(figsize=(5, 4))
            top = 0.0
            for label, ys in series.items():
                ys = np.asarray(ys)
                ok = ys > 0
                ax.loglog(eps[ok], ys[ok], marker="o", label=label)
                if ok.any():
                    top = max(top, float(ys[ok][0]))
            if top > 0:
                ax.loglog(eps, top * np.sqrt(eps / eps[0]), "k--", label="slope 1/2")
            ax.set_xlabel("eps")
            ax.set_ylabel(ylabel)
            ax.legend(fontsize="small")
            fig.tight_layout()
            p = out / f"{name}_{key.replace('_plot', '')}.svg"
            fig.savefig(p, format="svg", metadata={"Date": None})
            plt.close(fig)
            paths[key] = p
    return paths
