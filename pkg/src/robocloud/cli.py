"""Command-line entry point: ``robocloud <subcommand> ...``.

``ingest``, ``query`` and ``approx`` work on a data directory holding
``records.jsonl`` (the metastore) and ``objects/`` (a local-directory backend
mounted at ``/videos``).
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from dataclasses import replace
from pathlib import Path

from .backend import BackendDescriptor, MountTable
from .errors import RoboCloudError
from .harness.bench import bench_prefetch, enumerate_allocator_states, saturation_script, simulate
from .harness.capacity import capacity_plan
from .harness.config import load_config, with_seed
from .learning import ExtractorConfig, FramePolicy, load_stream, process_stream
from .metastore import MetaStore, QueryPredicate
from .prefetch import STRATEGIES, AccessLog, make_plan
from .reduction import approx_query
from .tiered import GB, MB, TieredStore, default_tiers

_UNITS = {"": 1, "B": 1, "KB": 1_000, "MB": MB, "GB": GB, "TB": 1_000 * GB}


def parse_size(text: str) -> int:
    """``"20GB"`` -> 20_000_000_000; plain numbers are bytes."""
    m = re.fullmatch(r"\s*([0-9]*\.?[0-9]+)\s*([KMGT]?B?)\s*", str(text).upper())
    if not m:
        raise argparse.ArgumentTypeError(f"bad size {text!r}")
    return int(round(float(m.group(1)) * _UNITS[m.group(2)]))


def _predicate(text: str) -> QueryPredicate:
    if text.startswith("@"):
        text = Path(text[1:]).read_text()
    try:
        return QueryPredicate.from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"predicate is not valid JSON: {exc}") from exc


def _dump(obj, out=None) -> None:
    (out or sys.stdout).write(json.dumps(obj, sort_keys=True, indent=2) + "\n")


# -- data directory ---------------------------------------------------------

def _records_file(data_dir: Path) -> Path:
    return data_dir / "records.jsonl"


def _open_metastore(data_dir: Path) -> MetaStore:
    meta = MetaStore()
    path = _records_file(data_dir)
    if path.exists():
        with path.open(encoding="utf-8") as fh:
            meta.import_jsonl(fh)
    return meta


def cmd_ingest(args) -> int:
    data_dir = Path(args.data_dir)
    (data_dir / "objects").mkdir(parents=True, exist_ok=True)
    mounts = MountTable().mount(
        "/videos", BackendDescriptor("videos", "local-directory", {"root": str(data_dir / "objects")}))
    store = TieredStore(default_tiers(), "DirectWrite", backend=mounts)
    meta = _open_metastore(data_dir)
    stream = load_stream(args.stream)
    record = process_stream(stream, FramePolicy(args.frame_interval),
                            ExtractorConfig(labels_per_frame=args.labels_per_frame), store, meta)
    with _records_file(data_dir).open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
    _dump(record.to_dict())
    return 0


def cmd_query(args) -> int:
    meta = _open_metastore(Path(args.data_dir))
    found = meta.query(args.predicate)
    if args.limit is not None:
        found = found[: args.limit]
    for r in found:
        sys.stdout.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    return 0


def cmd_approx(args) -> int:
    meta = _open_metastore(Path(args.data_dir))
    answer = approx_query(meta, args.predicate, args.q, args.seed, args.aggregate)
    _dump(answer.to_dict())
    return 0


# -- harness ------------------------------------------------------------------

def _config(args):
    config = load_config(args.config)
    if args.seed is not None:
        config = with_seed(config, args.seed)
    return config


def _emit_report(report, args) -> None:
    text = report.to_csv() if args.format == "csv" else report.to_json()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="")
    else:
        sys.stdout.write(text)


def cmd_simulate(args) -> int:
    config = _config(args)
    if args.strategy:
        config = replace(config, strategies=tuple(args.strategy))
    _emit_report(simulate(config), args)
    return 0


def cmd_plan(args) -> int:
    if args.access_log:
        with open(args.access_log, encoding="utf-8") as fh:
            log = AccessLog.load_jsonl(fh)
        now = args.now if args.now is not None else (log.entries[-1].timestamp if len(log) else 0.0)
        sizes = {e.object_path: args.object_size for e in log.entries}
        meta = None
        if args.strategy in ("label-hot", "location-hot"):
            if not args.data_dir:
                raise RoboCloudError(f"--strategy {args.strategy} needs --data-dir")
            meta = _open_metastore(Path(args.data_dir))
            for r in meta.records():
                sizes.setdefault(r.object_path, args.object_size)
        plan = make_plan(args.strategy, log, now, args.budget, sizes, meta)
        _dump(plan.to_dict())
        return 0
    plan = capacity_plan(args.machines, args.mem_per_machine, args.hdd_per_machine, args.avg_file,
                         args.per_image_latency, args.frame_interval, args.utilization,
                         args.queries_per_server, args.concurrency_factor)
    _dump(plan.to_dict())
    return 0


def cmd_bench_alloc(args) -> int:
    cases = enumerate_allocator_states(args.max_slots)
    full = [c for c in cases if c.full]
    sat = saturation_script(args.writes, args.seed)
    _dump({
        "states": len(cases),
        "direct_never_more_moves": all(c.direct_moves <= c.cascade_moves for c in cases),
        "full_occupancy_moves": sorted({(c.cascade_moves, c.direct_moves) for c in full}),
        "saturation": {"writes": sat.writes, "mean_latency_ms": sat.mean_latency,
                       "total_moves": sat.total_moves, "cascade_over_direct": sat.ratio},
    })
    return 0


def cmd_bench_prefetch(args) -> int:
    config = _config(args)
    _emit_report(bench_prefetch(config, tuple(args.strategy or STRATEGIES)), args)
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="robocloud", description="Tiered video storage and query toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="learn labels from a stream file and store it")
    s.add_argument("stream", help="stream file (JSON Lines header + frame lines)")
    s.add_argument("--data-dir", required=True)
    s.add_argument("--frame-interval", type=float, default=2.0)
    s.add_argument("--labels-per-frame", type=int, default=2)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("query", help="run a predicate (JSON or @file) against stored records")
    s.add_argument("predicate", type=_predicate)
    s.add_argument("--data-dir", required=True)
    s.add_argument("--limit", type=int)
    s.set_defaults(func=cmd_query)

    s = sub.add_parser("approx", help="sampled count/sum with a 95%% interval")
    s.add_argument("predicate", type=_predicate)
    s.add_argument("--data-dir", required=True)
    s.add_argument("--q", type=float, default=0.1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--aggregate", choices=("count", "sum"), default="count")
    s.set_defaults(func=cmd_approx)

    for name, func, helptext in (("simulate", cmd_simulate, "generate and replay a workload"),
                                 ("bench-prefetch", cmd_bench_prefetch, "replay one workload per strategy")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", help="TOML config file")
        s.add_argument("--seed", type=int)
        s.add_argument("--strategy", action="append", choices=STRATEGIES)
        s.add_argument("--format", choices=("json", "csv"), default="json")
        s.add_argument("--out")
        s.set_defaults(func=func)

    s = sub.add_parser("plan", help="capacity plan, or a prefetch plan with --access-log")
    s.add_argument("--machines", type=int, default=10)
    s.add_argument("--mem-per-machine", type=parse_size, default=20 * GB)
    s.add_argument("--hdd-per-machine", type=parse_size, default=200 * GB)
    s.add_argument("--avg-file", type=parse_size, default=10 * MB)
    s.add_argument("--per-image-latency", type=float, default=0.16)
    s.add_argument("--frame-interval", type=float, default=2.0)
    s.add_argument("--utilization", type=float, default=0.8)
    s.add_argument("--queries-per-server", type=int, default=100)
    s.add_argument("--concurrency-factor", type=float, default=0.1)
    s.add_argument("--access-log", help="JSON Lines access log; prints a prefetch plan instead")
    s.add_argument("--strategy", choices=STRATEGIES, default="time-period")
    s.add_argument("--now", type=float, help="planning time (default: last log entry)")
    s.add_argument("--budget", type=parse_size, default=300 * MB)
    s.add_argument("--object-size", type=parse_size, default=10 * MB)
    s.add_argument("--data-dir", help="records for label-hot / location-hot plans")
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("bench-alloc", help="allocator enumeration and saturation script")
    s.add_argument("--max-slots", type=int, default=4)
    s.add_argument("--writes", type=int, default=1000)
    s.add_argument("--seed", type=int, default=42)
    s.set_defaults(func=cmd_bench_alloc)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (RoboCloudError, OSError) as exc:
        print(f"robocloud: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
