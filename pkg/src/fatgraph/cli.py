"""``fatgraph`` command line.

Exit codes: 0 when every check passes, 2 when a bound or check is violated,
1 on operational failure (an error JSON object is printed on stderr).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

EXIT_OK, EXIT_FAIL, EXIT_VIOLATION = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--h", type=float, default=None, help="mesh size")
    common.add_argument("--k", type=int, default=None, help="number of eigenvalues")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out-dir", default=None)
    fmt = common.add_mutually_exclusive_group()
    fmt.add_argument("--json", dest="fmt", action="store_const", const="json")
    fmt.add_argument("--csv", dest="fmt", action="store_const", const="csv")
    common.set_defaults(fmt=None)

    p = argparse.ArgumentParser(prog="fatgraph", description="Metric graphs versus thin graph-like domains.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("mgspec", parents=[common], help="Kirchhoff spectrum (FEM and secular oracle)")
    s.add_argument("graph")

    s = sub.add_parser("femspec", parents=[common], help="Neumann spectrum of the thin domain")
    s.add_argument("graph")
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--variant", choices=("abstract", "embedded"), default="abstract")
    s.add_argument("--tau", type=float, default=0.25)

    s = sub.add_parser("constants", parents=[common], help="uniformity constants of graph and templates")
    s.add_argument("graph")
    s.add_argument("--tau", type=float, default=0.25)
    s.add_argument("--eps", type=float, nargs="*", default=None, help="also report rates at these eps")

    s = sub.add_parser("sweep", parents=[common], help="run an eps sweep from a config file")
    s.add_argument("config")

    s = sub.add_parser("verify", parents=[common], help="analytic check suites")
    s.add_argument("suite", choices=("gaffney", "kato", "trace", "scaling", "supersym"))
    s.add_argument("graph", nargs="?", default="builtin:theta")
    s.add_argument("--eps", type=float, default=0.2)

    s = sub.add_parser("mesh", parents=[common], help="export a graph-like mesh")
    s.add_argument("graph")
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--variant", choices=("abstract", "embedded"), default="abstract")
    s.add_argument("--tau", type=float, default=0.25)
    return p


def _emit(obj, fmt: str | None, rows_key: str | None = None) -> None:
    if fmt == "csv" and rows_key is not None:
        rows = obj[rows_key]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        sys.stdout.write(buf.getvalue())
    else:
        sys.stdout.write(json.dumps(obj, indent=2, default=float) + "\n")


def _spectrum_rows(values, source: str) -> list[dict]:
    from .linalg import cluster_ids

    ids = cluster_ids(values)
    return [{"index": i, "eigenvalue": float(v), "multiplicity_cluster_id": int(c), "source": source}
            for i, (v, c) in enumerate(zip(values, ids))]


def cmd_mgspec(a) -> int:
    from .harness import resolve_graph
    from .mg_operators import kirchhoff_spectrum
    from .secular import oracle_first

    g = resolve_graph(a.graph)
    k = a.k or 8
    fem = kirchhoff_spectrum(g, a.h or 1e-3, k, seed=a.seed).eigenvalues
    sec = oracle_first(g, k)
    rows = _spectrum_rows(fem, "fem") + _spectrum_rows(sec, "secular")
    _emit({"spectrum": rows}, a.fmt, "spectrum")
    return EXIT_OK


def cmd_femspec(a) -> int:
    from .fem import assemble_neumann, smallest_eigenpairs
    from .harness import default_h, resolve_graph
    from .mesh import build_abstract_space, build_embedded_space

    g = resolve_graph(a.graph)
    h = a.h or default_h(a.eps)
    if a.variant == "abstract":
        mesh = build_abstract_space(g, None, a.eps, h, tau=a.tau)
    else:
        mesh = build_embedded_space(g, None, a.eps, a.tau, h)
    res = smallest_eigenpairs(assemble_neumann(mesh), a.k or 8, seed=a.seed)
    _emit({"eps": a.eps, "h": h, "spectrum": _spectrum_rows(res.eigenvalues, "fem")}, a.fmt, "spectrum")
    return EXIT_OK


def cmd_constants(a) -> int:
    from .constants import compute_constants, constants_with_rates
    from .harness import resolve_graph
    from .mesh import default_templates

    g = resolve_graph(a.graph)
    rep = compute_constants(g, default_templates(g, a.tau), tau=a.tau, **({"h": a.h} if a.h else {}))
    out = constants_with_rates(rep, a.eps) if a.eps else rep.to_dict()
    _emit(out, "json")
    return EXIT_OK


def cmd_sweep(a) -> int:
    from .harness import SweepConfig, run_sweep

    cfg = SweepConfig.load(a.config)
    if a.k:
        cfg.k = a.k
    if a.h:
        cfg.h_cap = a.h
    cfg.seed = a.seed
    if a.out_dir:
        cfg.out_dir = a.out_dir
    res = run_sweep(cfg)
    if a.fmt == "json":
        _emit(res.summary(), "json")
    else:
        sys.stdout.write(res.csv_text())
    if res.failures:
        for r in res.failures:
            sys.stderr.write(json.dumps({"error": "row_failure", "eps": r.eps, "message": r.failure}) + "\n")
    if res.bound_violations:
        return EXIT_VIOLATION
    return EXIT_FAIL if res.failures else EXIT_OK


def cmd_verify(a) -> int:
    from . import analysis
    from .harness import resolve_graph

    if a.suite == "gaffney":
        reports = [
            analysis.verify_gaffney_identity(),
            analysis.verify_gaffney_identity(analysis.annulus_field()),
            analysis.verify_gaffney_estimate(analysis.disc_field(), 0.0),
            analysis.verify_gaffney_estimate(analysis.annulus_field(), 2.0),
            analysis.gaffney_scaling(eps=a.eps),
        ]
    elif a.suite == "kato":
        reports = [analysis.verify_kato(h_fd=a.h or 1e-4)]
    elif a.suite == "trace":
        from .fem import assemble_neumann
        from .mesh import build_abstract_space

        g = resolve_graph(a.graph)
        fem = assemble_neumann(build_abstract_space(g, None, a.eps, a.h or a.eps / 4))
        reports = [analysis.verify_trace_estimate(fem, e, end, seed=a.seed)
                   for e in range(g.n_edges) for end in ("init", "term")]
    elif a.suite == "scaling":
        from .templates import default_template

        reports = [analysis.verify_scaling(default_template(d), eps=a.eps) for d in (1, 2, 3)]
    else:
        g = resolve_graph(a.graph)
        reports = [analysis.verify_supersymmetry(g, h=a.h or 0.05, k=a.k)]
    _emit({"reports": [r.to_dict() for r in reports]}, "json")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VIOLATION


def cmd_mesh(a) -> int:
    from .harness import default_h, resolve_graph
    from .mesh import build_abstract_space, build_embedded_space

    g = resolve_graph(a.graph)
    h = a.h or default_h(a.eps)
    if a.variant == "abstract":
        mesh = build_abstract_space(g, None, a.eps, h, tau=a.tau)
    else:
        mesh = build_embedded_space(g, None, a.eps, a.tau, h)
    out = Path(a.out)
    if a.out_dir and not out.is_absolute():
        out = Path(a.out_dir) / out
    out.parent.mkdir(parents=True, exist_ok=True)
    mesh.export(out)
    _emit({"path": str(out), "nodes": mesh.n_nodes, "triangles": mesh.n_triangles,
           "min_angle_deg": mesh.min_angle(), "area": mesh.area}, "json")
    return EXIT_OK


COMMANDS = {"mgspec": cmd_mgspec, "femspec": cmd_femspec, "constants": cmd_constants,
            "sweep": cmd_sweep, "verify": cmd_verify, "mesh": cmd_mesh}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001  every failure becomes a JSON error record
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
