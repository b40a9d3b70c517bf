"""Command-line entry point.

Every subcommand prints a one-line JSON summary on success. Failures print
a JSON error object on stderr and exit nonzero. ``INNOSPACE_OUTPUT_DIR``
sets the directory used when ``--out`` is omitted.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import export
from .errors import ConfigError, InnospaceError

OUTPUT_ENV = "INNOSPACE_OUTPUT_DIR"
EXIT_ERROR = 1
EXIT_USAGE = 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _out(args, default_name: str) -> Path:
    """Resolve ``--out``; fall back to ``$INNOSPACE_OUTPUT_DIR/<default_name>``."""
    if args.out:
        path = Path(args.out)
    else:
        base = os.environ.get(OUTPUT_ENV)
        if not base:
            raise ConfigError(f"--out not given and {OUTPUT_ENV} is not set")
        path = Path(base) / default_name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _store(args):
    from .store import MatrixStore

    if not Path(args.store).is_dir():
        raise ConfigError(f"store directory {args.store!r} does not exist")
    return MatrixStore(args.store)


def _emit(payload: dict):
    print(json.dumps(payload, sort_keys=True))


def cmd_ingest(args):
    from .core import LayerId
    from .ingest import IngestReport, fractional_count_by_year, load_table, read_attributions
    from .store import MatrixStore

    layer = LayerId.parse(args.layer)
    report = IngestReport()
    mats = {}
    if args.input:
        for raw in load_table(args.input, layer, report):
            mats[raw.window.start_year] = raw
    if args.attribution:
        recs = read_attributions(args.attribution, report)
        for year, raw in fractional_count_by_year(recs, layer, report).items():
            if year in mats:
                raise ConfigError(f"year {year} present in both --input and --attribution")
            mats[year] = raw
    if not args.input and not args.attribution:
        raise ConfigError("give --input and/or --attribution")
    out = _out(args, "store")
    store = MatrixStore(out)
    for year in sorted(mats):
        store.put(mats[year])
    _emit({"layer": layer.name, "years": sorted(mats), "store": str(out), "report": report.to_dict()})


def cmd_binarize(args):
    from .core import TimeWindow

    store = _store(args)
    window = TimeWindow(args.year, args.pool, args.pooling)
    m = store.binary(args.layer, window, args.level)
    out = _out(args, f"binary_{args.layer}_{window.label}.csv")
    export.write_binary(m, out)
    _emit({"out": str(out), "shape": list(m.shape), "ones": int(m.entries.nnz),
           "dropped_rows": list(m.dropped_rows), "dropped_cols": list(m.dropped_cols)})


def cmd_assist(args):
    from .assist import assist_lagged
    from .pipeline import parse_side

    store = _store(args)
    L1, y1, l1 = parse_side(args.from_)
    L2, y2, l2 = parse_side(args.to)
    B = assist_lagged(store, L1, L2, y1, y2, l1, l2, args.pooling, args.pool)
    out = _out(args, "assist.csv")
    export.write_assist(B, out)
    _emit({"out": str(out), "shape": list(B.shape), "omitted_rows": list(B.omitted_rows),
           "substochastic_rows": list(B.substochastic_rows)})


def cmd_validate(args):
    from .core import TimeWindow
    from .pipeline import parse_side
    from .significance import check_resolution, validate_pair, validated_network

    check_resolution(args.threshold, args.ensemble, strict=True)
    store = _store(args)
    L1, y1, l1 = parse_side(args.from_)
    L2, y2, l2 = parse_side(args.to)
    m1 = store.binary(L1, TimeWindow(y1, args.pool, args.pooling), l1)
    m2 = store.binary(L2, TimeWindow(y2, args.pool, args.pooling), l2)
    _, res = validate_pair(m1, m2, args.ensemble, args.seed, (args.threshold,), args.workers)
    out = _out(args, "edges.csv")
    export.write_edges(export.result_rows(res, args.threshold, args.significant_only), out)
    payload = {"out": str(out), "links": int(res.exceed.size),
               "significant": int(res.significant(args.threshold).sum())}
    if args.graph:
        net = validated_network([res], args.threshold)
        export.export_graph(net, args.graph, args.format)
        payload["graph"] = str(args.graph)
    _emit(payload)


def cmd_signal(args):
    from .pipeline import parse_side
    from .signal import SignalConfig, parse_lags, phi_curve

    store = _store(args)
    L1, l1 = parse_side(args.from_, need_year=False)
    L2, l2 = parse_side(args.to, need_year=False)
    cfg = SignalConfig(threshold=args.threshold, ensemble=args.ensemble, pool=args.pool, pooling=args.pooling,
                       level1=l1, level2=l2, seed=args.seed, workers=args.workers)
    curve = phi_curve(store, L1, L2, parse_lags(args.lags), cfg)
    out = _out(args, "curve.csv")
    export.write_curve(curve, out)
    _emit({"out": str(out), "lags": curve.lags, "peak": curve.peak() if curve.points else None})


def cmd_synth(args):
    from .synth import CapabilityWorld, generate

    activities = tuple(int(x) for x in args.activities.split(","))
    layers = tuple(args.layers.split(",")) if args.layers else ("S", "T", "P")[:len(activities)]
    kw = dict(countries=args.countries, capabilities=args.capabilities, activities=activities, layers=layers,
              planted=args.planted, lag=args.lag, noise=args.noise)
    if args.years is not None:
        kw["n_years"] = args.years
    if args.first_year is not None:
        kw["first_year"] = args.first_year
    try:
        world = CapabilityWorld(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = _out(args, "synth")
    res = generate(world, args.seed, out)
    _emit({"out": str(out), "planted": len(res.planted), "layers": list(world.layers),
           "years": [world.first_year, world.first_year + world.n_years - 1]})


def cmd_export(args):
    edges = []
    for path in args.edges:
        edges.extend(e for e in export.read_edges(path) if args.threshold is None or e.p <= 1 - args.threshold + 1e-12)
    out = _out(args, f"network.{args.format or 'graphml'}")
    export.export_graph(edges, out, args.format)
    _emit({"out": str(out), "edges": len(edges), "nodes": len(export.node_degrees(edges))})


def cmd_profile(args):
    from .core import LayerId, TimeWindow
    from .pipeline import parse_side
    from .profile import profile_target

    store = _store(args)
    target, ty, tl = parse_side(args.target)
    sy = args.source_year if args.source_year is not None else ty
    if args.levels:
        levels = [None if x in ("", "finest") else int(x) for x in args.levels.split(",")]
    else:
        levels = [] if args.drill else [None]
    table = profile_target(store, target, args.code, LayerId.parse(args.source),
                           TimeWindow(ty, args.pool, args.pooling), TimeWindow(sy, args.pool, args.pooling),
                           levels=levels, target_level=tl, ensemble=args.ensemble, seed=args.seed,
                           threshold=args.threshold, drill=args.drill, drill_level=args.drill_level)
    out = _out(args, "profile.csv")
    export.write_profile(table, out)
    _emit({"out": str(out), "status": table.status, "rows": len(table.rows)})


def cmd_run(args):
    from .pipeline import PipelineConfig, run_pipeline

    overrides = {"seed": args.seed, "output_dir": str(Path(args.out).resolve()) if args.out else None}
    env = os.environ.get(OUTPUT_ENV)
    cfg = PipelineConfig.load(args.config, overrides,
                              default_output_dir=str(Path(env).resolve()) if env else None)
    manifest = run_pipeline(cfg)
    _emit({"manifest": str(cfg.output_dir / "manifest.json"), "outputs": len(manifest["outputs"]),
           "status": manifest["status"]})


def _window_args(p, pool_default=1):
    p.add_argument("--pool", type=int, default=pool_default, help="years per window")
    p.add_argument("--pooling", choices=["sum", "stack"], default="sum")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="innospace", description="Multilayer science/technology/production networks.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="build a matrix store from record tables")
    p.add_argument("--layer", required=True)
    p.add_argument("--input", help="country,code,year,value table")
    p.add_argument("--attribution", help="unit,countries,codes,year records (fractionally counted)")
    p.add_argument("--out", help="matrix store directory")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("binarize", help="RCA-binarize one window")
    p.add_argument("--store", required=True)
    p.add_argument("--layer", required=True)
    p.add_argument("--year", type=int, required=True)
    p.add_argument("--level", type=int)
    _window_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_binarize)

    for name, func, help_ in (("assist", cmd_assist, "Assist matrix between two windows"),
                              ("validate", cmd_validate, "validate Assist links against the BiCM null")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--store", required=True)
        p.add_argument("--from", dest="from_", required=True, metavar="LAYER:YEAR[:LEVEL]")
        p.add_argument("--to", required=True, metavar="LAYER:YEAR[:LEVEL]")
        _window_args(p)
        p.add_argument("--out")
        p.set_defaults(func=func)
        if name == "validate":
            p.add_argument("--ensemble", type=int, default=1000)
            p.add_argument("--threshold", type=float, default=0.99)
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--workers", type=int, default=1)
            p.add_argument("--significant-only", action="store_true")
            p.add_argument("--graph", help="also write the validated network here")
            p.add_argument("--format", choices=export.FORMATS)

    p = sub.add_parser("signal", help="signal-to-noise curve over lags")
    p.add_argument("--store", required=True)
    p.add_argument("--from", dest="from_", required=True, metavar="LAYER[:LEVEL]")
    p.add_argument("--to", required=True, metavar="LAYER[:LEVEL]")
    p.add_argument("--lags", required=True, help="min..max or a comma list")
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--ensemble", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    _window_args(p, pool_default=3)
    p.add_argument("--out")
    p.set_defaults(func=cmd_signal)

    p = sub.add_parser("synth", help="generate a planted-capability store")
    p.add_argument("--countries", type=int, default=30)
    p.add_argument("--capabilities", type=int, default=100)
    p.add_argument("--activities", default="20,20,20")
    p.add_argument("--layers")
    p.add_argument("--planted", type=int, default=15)
    p.add_argument("--lag", type=int, default=3)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--years", type=int)
    p.add_argument("--first-year", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("export", help="convert validated edge tables to a graph file")
    p.add_argument("--edges", nargs="+", required=True)
    p.add_argument("--format", help=f"one of {', '.join(export.FORMATS)} (default: from --out suffix)")
    p.add_argument("--threshold", type=float, help="keep only edges with p <= 1 - threshold")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("profile", help="significance profile of one target activity")
    p.add_argument("--store", required=True)
    p.add_argument("--target", required=True, metavar="LAYER:YEAR[:LEVEL]")
    p.add_argument("--code", required=True)
    p.add_argument("--source", required=True, help="source layer")
    p.add_argument("--source-year", type=int)
    p.add_argument("--levels", help="comma list of source levels ('finest' for the raw level)")
    p.add_argument("--drill", help="source code to expand at a finer level")
    p.add_argument("--drill-level", type=int)
    p.add_argument("--ensemble", type=int, default=1000)
    p.add_argument("--threshold", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    _window_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("run", help="run a YAML pipeline config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.set_defaults(func=cmd_run)
    return ap


def _join_lags(argv):
    # "--lags -2..3" would otherwise be read as an unknown option
    out = []
    for a in argv:
        if out and out[-1] == "--lags" and a.startswith("-"):
            out[-1] = f"--lags={a}"
        else:
            out.append(a)
    return out


def main(argv=None) -> int:
    argv = _join_lags(list(sys.argv[1:] if argv is None else argv))
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(json.dumps({"error": "usage", "message": str(exc)}), file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except InnospaceError as exc:
        print(json.dumps(exc.to_dict(), sort_keys=True), file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, KeyError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}, sort_keys=True), file=sys.stderr)
        return EXIT_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
