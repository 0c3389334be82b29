"""Command-line entry point.

Exit codes: 0 success, 1 input error, 2 singular covariance after ridge
escalation, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .bench import ALGORITHMS, SyntheticSpec, report_csv, report_json, run_bench
from .errors import InnerCoreError, InputError
from .graph import save_cache
from .pipeline import (MEMBERSHIP_COLUMNS, MOTIF_COLUMNS, RANK_COLUMNS, SERIES_COLUMNS,
                       OutputSet, RunConfig, StageError, compute_cores, core_sets, load_graph,
                       load_label_set, membership_rows, motif_rows, motif_stage, rank_stage,
                       ranked_rows, read_membership, read_motif_counts, read_series, run_pipeline,
                       series_for, series_rows)
from .temporal import annotate, build_series

log = logging.getLogger("innercore")


def _common(p: argparse.ArgumentParser, graph=True):
    p.add_argument("--config", help="JSON config file (default: $INNERCORE_CONFIG)")
    p.add_argument("-o", "--output", help="output directory")
    p.add_argument("--json", action="store_const", const=True, default=None,
                   help="write tables as JSON instead of CSV")
    p.add_argument("--no-timestamp", dest="timestamp", action="store_const", const=False, default=None,
                   help="omit the generated-at header line")
    p.add_argument("--threads", type=int, help="worker threads for per-day work")
    if graph:
        p.add_argument("-i", "--input", dest="inputs", action="append", help="transaction CSV (repeatable)")
        p.add_argument("--cache", help="binary snapshot cache to read or write")
        p.add_argument("--tz-offset", type=int, help="reference timezone offset in minutes")
        p.add_argument("--decimals", type=int, help="token decimals for value scaling")
        p.add_argument("--token-decimals", type=json.loads,
                       help='per-token decimals as JSON, e.g. \'{"0xabc": 6}\'')
        p.add_argument("--token-column", help="CSV column naming the token contract")
        p.add_argument("--keep-zero-weight", action="store_const", const=True, default=None)
        p.add_argument("--max-malformed", dest="max_malformed_fraction", type=float,
                       help="tolerated fraction of malformed rows")
        p.add_argument("--normalize-tokens", action="store_const", const=True, default=None,
                       help="rescale weights per token by their standard deviation")


def _core_opts(p):
    p.add_argument("--epsilon", type=float, help="depth threshold (default 0.1)")
    p.add_argument("--props", type=lambda s: [x for x in s.split(",") if x],
                   help="comma-separated node properties (default deg_in,deg_out,S_in,S_out)")
    p.add_argument("--reestimate-cov", action="store_const", const=True, default=None)


def _series_opts(p):
    p.add_argument("--history", type=int, help="days of history to compare against (default 1)")
    p.add_argument("--window", type=int, help="pattern median window (default 7)")
    p.add_argument("--tau", type=float, help="pattern threshold (default 0.25)")
    p.add_argument("--lag", type=int, help="max days from expansion to decay peak (default 7)")


def _rank_opts(p):
    p.add_argument("--labels", help="address,label CSV")
    p.add_argument("--combine-m5", action="store_const", const=True, default=None,
                   help="pool C5a and C5b into one population")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="innercore", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="read CSVs into a snapshot cache and print a report")
    _common(p)

    p = sub.add_parser("innercore", help="daily InnerCore membership")
    _common(p)
    _core_opts(p)

    p = sub.add_parser("series", help="expansion/decay series from InnerCore membership")
    _common(p)
    _core_opts(p)
    _series_opts(p)
    p.add_argument("--cores", help="membership CSV from `innercore` (skips recomputation)")

    p = sub.add_parser("patterns", help="behavioral patterns and anomaly pairs of a series")
    _common(p, graph=False)
    _series_opts(p)
    p.add_argument("--series", required=True, help="series CSV from `series`")

    p = sub.add_parser("motifs", help="centered motif counts inside daily InnerCores")
    _common(p)
    _core_opts(p)
    p.add_argument("--cores", help="membership CSV from `innercore`")
    p.add_argument("--days", help="comma-separated ISO days (default: all)")

    p = sub.add_parser("rank", help="NF-IAF scores and percentiles from motif counts")
    _common(p, graph=False)
    _rank_opts(p)
    p.add_argument("--motifs", required=True, help="motif CSV from `motifs`")

    p = sub.add_parser("pipeline", help="run every stage end to end")
    _common(p)
    _core_opts(p)
    _series_opts(p)
    _rank_opts(p)
    p.add_argument("--motif-days", choices=["anomalous", "all"])

    p = sub.add_parser("bench", help="time innercore / alphacore / kcore on a synthetic graph")
    p.add_argument("-o", "--output", help="output directory")
    p.add_argument("--algos", default=",".join(ALGORITHMS))
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--m", type=int, default=50_000)
    p.add_argument("--exponent", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--step", type=float, default=0.1)
    p.add_argument("--threads", type=int, default=1, help="BLAS/OpenMP thread cap")
    return ap


_CFG_KEYS = ("output", "json", "timestamp", "threads", "inputs", "cache", "tz_offset",
             "keep_zero_weight", "max_malformed_fraction", "normalize_tokens", "epsilon", "props",
             "reestimate_cov", "history", "window", "tau", "lag", "labels", "combine_m5", "motif_days")


def config_from_args(args) -> RunConfig:
    over = {k: getattr(args, k) for k in _CFG_KEYS if hasattr(args, k)}
    if getattr(args, "token_decimals", None) is not None:
        over["decimals"] = args.token_decimals
        if args.decimals is not None:
            over["default_decimals"] = args.decimals
    elif getattr(args, "decimals", None) is not None:
        over["decimals"] = args.decimals
    cfg = RunConfig.load(args.config, over)
    if getattr(args, "token_column", None):
        cfg.schema = {**cfg.schema, "token": args.token_column}
    return cfg


def cmd_ingest(cfg: RunConfig) -> int:
    tg = load_graph(cfg)
    rep = tg.report.as_dict() if tg.report else {}
    days = [{"day": g.day.isoformat(), "nodes": g.num_nodes, "edges": g.num_edges} for g in tg]
    if not days:
        log.warning("no snapshots: input had no usable rows")
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    cache = Path(cfg.cache) if cfg.cache else out / "graph.npz"
    tmp = cache.with_name(cache.name + ".tmp")
    save_cache(tg, tmp)
    tmp.replace(cache)
    doc = {"days": days, "snapshots": len(days), **rep, "cache": str(cache), "config": cfg.provenance()}
    report = OutputSet(out)
    report.text("ingest_report.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    report.commit()
    for d in days:
        print(f"{d['day']}  nodes={d['nodes']}  edges={d['edges']}")
    print(f"{len(days)} snapshot(s); rows={rep.get('rows', 0)} malformed={rep.get('malformed', 0)} "
          f"zero_weight_dropped={rep.get('zero_weight_dropped', 0)}")
    return 0


def cmd_innercore(cfg: RunConfig) -> int:
    tg = load_graph(cfg)
    cores = compute_cores(tg, cfg)
    out = OutputSet(cfg.output, cfg)
    out.table("innercore", MEMBERSHIP_COLUMNS, membership_rows(cores, tg.book))
    doc = {d.isoformat(): r.as_dict(tg.book) for d, r in cores.items()}
    out.text("innercore_runs.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    out.commit()
    for d, r in cores.items():
        print(f"{d}  members={len(r)}  iterations={r.iterations}  {r.elapsed:.3f}s")
    return 0


def cmd_series(cfg: RunConfig, cores_path=None) -> int:
    if cores_path:
        from .graph import AddressBook

        sets = read_membership(cores_path, AddressBook())
    else:
        sets = core_sets(compute_cores(load_graph(cfg), cfg))
    s = build_series(sets, sorted(sets), cfg.history, cfg.epsilon)
    out = OutputSet(cfg.output, cfg)
    out.table("series", SERIES_COLUMNS, series_rows(s))
    out.commit()
    return 0


def cmd_patterns(cfg: RunConfig, series_path) -> int:
    s = annotate(read_series(series_path, cfg.history, cfg.epsilon), cfg.window, cfg.tau, cfg.lag)
    out = OutputSet(cfg.output, cfg)
    out.table("series", SERIES_COLUMNS, series_rows(s))
    from .pipeline import anomaly_report

    out.text("anomalies.json", anomaly_report(s, cfg, []))
    out.commit()
    for a, b in s.pairs:
        print(f"anomaly: expansion {a} -> decay {b}")
    return 0


def cmd_motifs(cfg: RunConfig, cores_path=None, days=None) -> int:
    tg = load_graph(cfg)
    if cores_path:
        sets = read_membership(cores_path, tg.book)
    else:
        sets = core_sets(compute_cores(tg, cfg))
    from .pipeline import parse_day

    chosen = [parse_day(d) for d in days.split(",")] if days else sorted(sets)
    counts = motif_stage(tg, sets, chosen)
    out = OutputSet(cfg.output, cfg)
    out.table("motifs", MOTIF_COLUMNS, motif_rows(counts, tg.book))
    out.commit()
    return 0


def cmd_rank(cfg: RunConfig, motifs_path) -> int:
    from .graph import AddressBook

    book = AddressBook()
    counts = read_motif_counts(motifs_path, book)
    _, rows = rank_stage(counts, book, load_label_set(cfg), cfg.combine_m5)
    out = OutputSet(cfg.output, cfg)
    out.table("nfiaf", RANK_COLUMNS, ranked_rows(rows))
    out.commit()
    return 0


def cmd_pipeline(cfg: RunConfig) -> int:
    written = run_pipeline(cfg)
    for p in written:
        print(p)
    return 0


def _cap_threads(n: int):
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return None
    return threadpool_limits(limits=n)


def cmd_bench(args) -> int:
    spec = SyntheticSpec(n=args.n, m=args.m, exponent=args.exponent, seed=args.seed)
    limiter = _cap_threads(args.threads)
    try:
        rep = run_bench(args.algos.split(","), spec, args.epsilon, args.reps, args.step)
    finally:
        if limiter is not None:
            limiter.restore_original_limits()
    rep["threads"] = args.threads
    out = Path(args.output or "bench_out")
    o = OutputSet(out)
    o.text("bench.json", report_json(rep))
    o.text("bench.csv", report_csv(rep))
    o.commit()
    for algo, r in rep["results"].items():
        print(f"{algo:10s} mean={r['mean']:.4f}s min={r['min']:.4f}s max={r['max']:.4f}s")
    if "innercore_vs_alphacore" in rep:
        x = rep["innercore_vs_alphacore"]
        print(f"innercore vs innermost alphacore: {'match' if x['match'] else 'mismatch'}"
              f" (ratio {x['time_ratio']:.3f})")
    return 0


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "bench":
            return cmd_bench(args)
        cfg = config_from_args(args)
        if args.command == "ingest":
            return cmd_ingest(cfg)
        if args.command == "innercore":
            return cmd_innercore(cfg)
        if args.command == "series":
            return cmd_series(cfg, args.cores)
        if args.command == "patterns":
            return cmd_patterns(cfg, args.series)
        if args.command == "motifs":
            return cmd_motifs(cfg, args.cores, args.days)
        if args.command == "rank":
            return cmd_rank(cfg, args.motifs)
        if args.command == "pipeline":
            return cmd_pipeline(cfg)
    except StageError as exc:
        print(f"innercore: {exc}", file=sys.stderr)
        return exc.exit_code
    except InnerCoreError as exc:
        print(f"innercore {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, KeyError, OSError) as exc:
        print(f"innercore {args.command}: {exc}", file=sys.stderr)
        return InputError.exit_code
    ap.error(f"unknown command {args.command}")
    return 1


if __name__ == "__main__":
    sys.exit(main())
