"""Command-line front end.

Verbs: sample, distance, across, around, crossing, estimate, experiment,
report.  Batch outputs are CSV (one row per replica or query, header row
naming columns and units) plus a canonical report file for experiments; the
report verb re-renders a saved report into CSV and PNG figures.  Exit codes:
0 pass, 1 hard failure, 2 usage, 3 statistical-warn only.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .errors import LfppError
from . import estimate as est
from .experiments import (
    FAIL,
    WARN,
    ExperimentSpec,
    Report,
    run_experiment,
)
from .field import GridSpec, sample_field, mollify
from .metric import (
    AnnulusSpec,
    across_annulus,
    around_annulus,
    build_weighted_grid,
    crossing_length,
    distance,
)
from .store import RunConfig, read_config, read_report, save_field, write_report

_ERR_PREFIX = "lfpp: error:"


@dataclass
class Command:
    """A parsed invocation: the verb plus its validated flag map."""

    verb: str
    options: dict


def _point(text: str):
    x, y = (float(t) for t in text.split(","))
    return (x, y)


def _square(text: str):
    x0, y0, side = (float(t) for t in text.split(","))
    return (x0, y0, side)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lfpp",
        description="Sample log-correlated fields, query weighted first-passage "
        "distances, estimate normalizers, and run scaling experiments.",
        epilog="CSV schemas: header cells are column(unit), with unit 'lfpp' "
        "for weighted lengths, '1' for dimensionless ratios/factors, 'field' "
        "for field values, '-' for labels. distance/across/around/crossing "
        "write one row per query (geometry, xi, eps, value); estimate writes "
        "one row per replica (replica, seed_hex, value); experiment writes "
        "one row per replica with kind-specific columns plus NAME.report.json. "
        "Exit codes: 0 pass, 1 fail, 2 usage, 3 statistical-warn.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, *, replicas=False, quantile=False):
        p.add_argument("--config", type=str, default=None, help="INI config file")
        p.add_argument("--seed", type=lambda s: int(s, 0), default=None,
                       help="root seed (u64)")
        group = p.add_mutually_exclusive_group()
        group.add_argument("--xi", type=float, default=None,
                           help="temperature parameter")
        group.add_argument("--gamma", type=float, default=None,
                           help="coupling in (0, 2); routed through the "
                           "temperature enclosure (midpoint)")
        p.add_argument("--eps", type=float, default=None, help="smoothing scale")
        p.add_argument("--n", type=int, default=None, help="grid points per side")
        p.add_argument("--out", type=str, default=None, help="output path")
        p.add_argument("--workers", type=int, default=None,
                       help="parallel replica workers (0 = all processors)")
        if replicas:
            p.add_argument("--replicas", type=int, default=None)
        if quantile:
            p.add_argument("--quantile", type=float, default=None,
                           help="quantile level in (0, 1)")

    p = sub.add_parser("sample", help="sample a field and write a cache file")
    common(p)

    p = sub.add_parser("distance", help="point-to-point distance")
    common(p)
    p.add_argument("--from", dest="src", type=_point, default=(0.0, 0.0),
                   metavar="X,Y")
    p.add_argument("--to", dest="dst", type=_point, default=(1.0, 0.0),
                   metavar="X,Y")

    for verb, hint in (("across", "distance between annulus boundaries"),
                       ("around", "shortest separating cycle in an annulus")):
        p = sub.add_parser(verb, help=hint)
        common(p)
        p.add_argument("--center", type=_point, default=(0.0, 0.0), metavar="X,Y")
        p.add_argument("--r1", type=float, default=0.25)
        p.add_argument("--r2", type=float, default=0.5)

    p = sub.add_parser("crossing", help="left-right crossing of a square")
    common(p)
    p.add_argument("--square", type=_square, default=(0.0, 0.0, 1.0),
                   metavar="X0,Y0,SIDE")

    p = sub.add_parser("estimate", help="Monte Carlo normalizer estimate")
    common(p, replicas=True, quantile=True)
    p.add_argument("--target", choices=("a_eps", "alpha", "beta"), default="a_eps")

    p = sub.add_parser("experiment", help="run a named experiment")
    common(p, replicas=True, quantile=True)
    p.add_argument("--experiment", required=True, metavar="NAME",
                   help="continuity | euclidean_limit | exponent_scan | xi_infty"
                   " | annulus_scaling | weyl_check | invariance_check")
    p.add_argument("--synthetic-slope", type=float, default=None,
                   help="exponent_scan only: inject an exact power law")
    p.add_argument("--f", choices=("const", "bump"), default="const",
                   help="weyl_check only: shift function shape")
    p.add_argument("--c", type=float, default=None,
                   help="weyl_check only: constant shift value")

    p = sub.add_parser("report", help="render a saved report to CSV and figures")
    p.add_argument("path", type=str, help="report file")
    p.add_argument("--out", type=str, default=None,
                   help="output directory (default: alongside the report)")
    return parser


def parse(argv) -> Command:
    """Parse argv into a Command; argparse exits with code 2 on usage errors."""
    ns = _build_parser().parse_args(argv)
    return Command(verb=ns.verb, options=vars(ns))


def _load_config(opts: dict) -> RunConfig:
    cfg = read_config(opts["config"]) if opts.get("config") else RunConfig()
    if opts.get("n") is not None:
        cfg.n = opts["n"]
    if opts.get("seed") is not None:
        cfg.root_seed = opts["seed"]
    if opts.get("eps") is not None:
        cfg.eps = opts["eps"]
    if opts.get("replicas") is not None:
        cfg.replicas = opts["replicas"]
    if opts.get("workers") is not None:
        cfg.workers = opts["workers"]
    if opts.get("quantile") is not None:
        cfg.p = opts["quantile"]
    return cfg


def _resolve_xi(opts: dict, default: float = 0.408248) -> float:
    """--xi wins; --gamma routes through the enclosure with the midpoint."""
    if opts.get("xi") is not None:
        return opts["xi"]
    if opts.get("gamma") is not None:
        g = opts["gamma"]
        lo, hi = est.xi_bounds_of_gamma(g)
        mid = 0.5 * (lo + hi)
        print(f"gamma {g:g}: xi enclosure [{lo:.6f}, {hi:.6f}], using midpoint {mid:.6f}")
        return mid
    return default


_UNIT_PREFIXES = (
    ("value", "lfpp"), ("d01", "lfpp"), ("across", "lfpp"), ("around", "lfpp"),
    ("cross", "lfpp"), ("pair", "1"), ("factor", "1"), ("max_rel_dev", "1"),
    ("fmin", "field"), ("fmax", "field"),
)


def _unit_of(column: str) -> str:
    for prefix, unit in _UNIT_PREFIXES:
        if column.startswith(prefix):
            return unit
    return "1" if column not in ("replica", "seed_hex") else "-"


def _write_csv(path: Path, records: list) -> None:
    """Deterministic CSV: insertion-ordered columns, repr floats."""
    if not records:
        path.write_text("", encoding="utf-8")
        return
    columns = list(records[0].keys())
    lines = [",".join(f"{c}({_unit_of(c)})" for c in columns)]
    for rec in records:
        cells = []
        for c in columns:
            v = rec.get(c, "")
            cells.append(repr(v) if isinstance(v, float) else str(v))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _out_dir(opts: dict, cfg: RunConfig) -> Path:
    out = Path(opts.get("out") or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _default_cache_under(out: Path) -> None:
    """Cache mollified fields under the output directory unless the
    environment already points elsewhere, so reruns never resample."""
    os.environ.setdefault("LFPP_CACHE_DIR", str(out / "field_cache"))


def _exit_code(report: Report) -> int:
    if any(v == FAIL for v in report.verdicts.values()):
        return 1
    if any(v == WARN for v in report.verdicts.values()):
        return 3
    return 0


def _print_verdicts(report: Report) -> None:
    for name, verdict in sorted(report.verdicts.items()):
        print(f"verdict {name}: {verdict}")


def _cmd_sample(opts: dict) -> int:
    cfg = _load_config(opts)
    fld = sample_field(cfg.grid(), cfg.root_seed)
    if opts.get("eps") is not None:
        fld = mollify(fld, opts["eps"])
    out = Path(opts.get("out") or "field.fld")
    save_field(fld, out)
    print(f"wrote {out} (n={fld.spec.n}, seed={cfg.root_seed:#x}, kind={fld.kind})")
    return 0


def _query_grid(cfg: RunConfig, opts: dict):
    xi = _resolve_xi(opts)
    fld = sample_field(cfg.grid(), cfg.root_seed)
    return build_weighted_grid(mollify(fld, cfg.eps), xi), xi


def _cmd_distance(opts: dict) -> int:
    cfg = _load_config(opts)
    grid, xi = _query_grid(cfg, opts)
    res = distance(grid, opts["src"], opts["dst"])
    rec = {
        "from_x": opts["src"][0], "from_y": opts["src"][1],
        "to_x": opts["dst"][0], "to_y": opts["dst"][1],
        "xi": xi, "eps": cfg.eps, "value": res.value,
        "nodes_reached": res.relaxations,
    }
    print(f"distance = {res.value!r}")
    if opts.get("out"):
        _write_csv(Path(opts["out"]), [rec])
    return 0


def _cmd_annulus(opts: dict, verb: str) -> int:
    cfg = _load_config(opts)
    grid, xi = _query_grid(cfg, opts)
    ann = AnnulusSpec(opts["center"], opts["r1"], opts["r2"])
    res = across_annulus(grid, ann) if verb == "across" else around_annulus(grid, ann)
    rec = {
        "center_x": ann.center[0], "center_y": ann.center[1],
        "r1": ann.r1, "r2": ann.r2, "xi": xi, "eps": cfg.eps,
        f"{verb}_value": res.value,
    }
    print(f"{verb} = {res.value!r}")
    if opts.get("out"):
        _write_csv(Path(opts["out"]), [rec])
    return 0


def _cmd_crossing(opts: dict) -> int:
    cfg = _load_config(opts)
    grid, xi = _query_grid(cfg, opts)
    res = crossing_length(grid, opts["square"])
    x0, y0, side = opts["square"]
    rec = {"x0": x0, "y0": y0, "side": side, "xi": xi, "eps": cfg.eps,
           "crossing_value": res.value}
    print(f"crossing = {res.value!r}")
    if opts.get("out"):
        _write_csv(Path(opts["out"]), [rec])
    return 0


def _cmd_estimate(opts: dict) -> int:
    cfg = _load_config(opts)
    xi = _resolve_xi(opts)
    workers = cfg.effective_workers()
    if opts["target"] == "alpha" and cfg.half_width < 2.2 and opts.get("n") is None:
        print("note: widening grid to half_width=3 for the unit annulus",
              file=sys.stderr)
        cfg.half_width = 3.0
    out = _out_dir(opts, cfg)
    _default_cache_under(out)
    grid = cfg.grid()
    target = opts["target"]
    if target == "a_eps":
        samples = est.crossing_samples(xi, cfg.eps, cfg.replicas, cfg.root_seed,
                                       grid, workers=workers)
        q = est.quantile_estimate(samples, 0.5)
    elif target == "alpha":
        samples = est.around_samples(xi, cfg.eps, cfg.replicas, cfg.root_seed,
                                     grid, workers=workers)
        q = est.quantile_estimate(samples, cfg.p)
    else:
        samples = est.beta_samples(xi, cfg.eps, cfg.replicas, cfg.root_seed,
                                   grid, workers=workers)
        q = est.quantile_estimate(samples, 0.5)
    print(f"{target}: point={q.point!r} ci=[{q.ci_lo!r}, {q.ci_hi!r}] "
          f"confidence={q.confidence} n={q.n}")
    records = [
        {"replica": i, "seed_hex": f"{s:016x}", "value": float(v)}
        for i, (s, v) in enumerate(zip(samples.seeds, samples.values))
    ]
    _write_csv(out / f"estimate_{target}.csv", records)
    return 0


def _experiment_spec(name: str, cfg: RunConfig, opts: dict) -> ExperimentSpec:
    half_width = cfg.half_width
    if name == "xi_infty" and half_width < 2.2:
        print("note: widening grid to half_width=3 for the unit annulus",
              file=sys.stderr)
        half_width = 3.0
    grid = GridSpec(n=cfg.n, half_width=half_width, pad_factor=cfg.pad_factor)
    xi = _resolve_xi(opts)
    params: dict = {"eps": cfg.eps}
    if name == "continuity":
        params["gammas"] = sorted(cfg.gammas)
    elif name == "euclidean_limit":
        params["gammas"] = sorted(cfg.gammas, reverse=True)
    elif name == "exponent_scan":
        params["xis"] = [xi] if opts.get("xi") or opts.get("gamma") else list(cfg.xis)
        ladder = list(cfg.eps_ladder)
        resolvable = [e for e in ladder if e >= 2.0 * grid.delta]
        if len(resolvable) < len(ladder) and opts.get("synthetic_slope") is None:
            print(f"note: dropping ladder rungs below 2*delta = {2 * grid.delta:g} "
                  f"(grid n={grid.n}); kept {[f'{e:g}' for e in resolvable]}",
                  file=sys.stderr)
            ladder = resolvable
        params["eps_ladder"] = ladder
        if opts.get("synthetic_slope") is not None:
            params["synthetic_powerlaw"] = opts["synthetic_slope"]
        del params["eps"]
    elif name == "xi_infty":
        params["xis"] = [x for x in cfg.xis if x >= 1] or [2.0, 4.0, 8.0]
        params["p"] = cfg.p
    elif name == "annulus_scaling":
        params["xi"] = xi
        params["radii"] = list(cfg.radii)
    elif name == "weyl_check":
        explicit = opts.get("xi") is not None or opts.get("gamma") is not None
        params["xi"] = xi if explicit else 1.0
        params["f"] = opts.get("f") or "const"
        params["c"] = opts["c"] if opts.get("c") is not None else cfg.c
    elif name == "invariance_check":
        params["xi"] = xi
        params["shift"] = [0.5, 0.0]
        params["r1"] = 0.25
        params["r2"] = 0.5
    return ExperimentSpec(kind=name, parameters=params, root_seed=cfg.root_seed,
                          grid=grid, replicas=cfg.replicas,
                          workers=cfg.effective_workers())


def _cmd_experiment(opts: dict) -> int:
    cfg = _load_config(opts)
    name = opts["experiment"]
    out = _out_dir(opts, cfg)
    _default_cache_under(out)
    spec = _experiment_spec(name, cfg, opts)
    report = run_experiment(spec)
    _write_csv(out / f"{name}.csv", report.per_replica)
    print(f"wall time: {report.wall_time:.2f}s", file=sys.stderr)
    report.wall_time = 0.0  # deterministic artifacts carry no timing
    write_report(report, out / f"{name}.report.json")
    _print_verdicts(report)
    return _exit_code(report)


def _cmd_report(opts: dict) -> int:
    path = Path(opts["path"])
    report = read_report(path)
    out = Path(opts.get("out") or path.parent)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / f"{report.spec.kind}.csv", report.per_replica)
    from .figures import render_report_figures

    figures = render_report_figures(report, out)
    for fig in figures:
        print(f"wrote {fig}")
    _print_verdicts(report)
    return _exit_code(report)


def run(cmd: Command) -> int:
    """Dispatch a parsed command; returns the process exit code."""
    opts = cmd.options
    try:
        if cmd.verb == "sample":
            return _cmd_sample(opts)
        if cmd.verb == "distance":
            return _cmd_distance(opts)
        if cmd.verb in ("across", "around"):
            return _cmd_annulus(opts, cmd.verb)
        if cmd.verb == "crossing":
            return _cmd_crossing(opts)
        if cmd.verb == "estimate":
            return _cmd_estimate(opts)
        if cmd.verb == "experiment":
            return _cmd_experiment(opts)
        if cmd.verb == "report":
            return _cmd_report(opts)
    except LfppError as exc:
        print(f"{_ERR_PREFIX} {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"{_ERR_PREFIX} io: {exc}", file=sys.stderr)
        return 1
    print(f"{_ERR_PREFIX} unknown verb {cmd.verb!r}", file=sys.stderr)
    return 2


def main(argv=None) -> None:
    sys.exit(run(parse(sys.argv[1:] if argv is None else argv)))


if __name__ == "__main__":
    main()
