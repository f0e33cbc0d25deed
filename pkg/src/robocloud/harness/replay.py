"""Deterministic trace replay over the assembled system.

Events drive the learning pipeline, metastore, tiered store and prefetcher
on a logical clock; every latency comes from the store's cost model. At each
4-hour period boundary the prefetcher plans and, if the store is idle,
promotes the plan into free tier space.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from ..backend import BackendDescriptor, MountTable
from ..errors import ConfigError, MalformedEventError, RoboCloudError
from ..learning import ExtractorConfig, FramePolicy, Skipped, process_stream, synthetic_stream
from ..metastore import MetaStore, QueryPredicate
from ..prefetch import PERIOD, STRATEGIES, AccessLog, AccessLogEntry, execute_plan, make_plan
from ..reduction import InclusionPolicy, PreLearningSampler, PreMemorizationSampler
from ..tiered import MB, AllocatorKind, BackendCost, TierConfig, TieredStore, default_tiers
from .report import LatencyStats, MetricsReport, RunMetrics
from .workload import EVENT_KINDS, TraceEvent


def harness_tiers() -> tuple[TierConfig, ...]:
    return tuple(default_tiers(memory=100 * MB, ssd=300 * MB, hdd=600 * MB, reserve_fraction=0.4))


@dataclass(frozen=True)
class SystemConfig:
    tiers: tuple[TierConfig, ...] = field(default_factory=harness_tiers)
    allocator: str = "DefaultCascade"
    evictor: str = "lru"
    backend_cost: BackendCost = BackendCost()
    prefetch_strategy: str = "none"
    prefetch_budget: int = 300 * MB
    load_threshold: float = 1.0
    frame_interval: float = 2.0
    labels_per_frame: int = 2
    query_overhead_ms: float = 4.0
    pre_learning: InclusionPolicy | None = None
    pre_memorization: InclusionPolicy | None = None

    def __post_init__(self):
        AllocatorKind.parse(self.allocator)
        if self.prefetch_strategy not in STRATEGIES:
            raise ConfigError(f"unknown prefetch strategy {self.prefetch_strategy!r}")
        if self.prefetch_budget <= 0:
            raise ConfigError("prefetch_budget must be > 0")
        if self.query_overhead_ms < 0:
            raise ConfigError("query_overhead_ms must be >= 0")

    def with_strategy(self, strategy: str) -> "SystemConfig":
        return replace(self, prefetch_strategy=strategy)


def _check_event(i: int, ev, last_t: float) -> None:
    if not isinstance(ev, TraceEvent):
        raise MalformedEventError(i, f"not a TraceEvent: {ev!r}")
    if ev.kind not in EVENT_KINDS:
        raise MalformedEventError(i, f"unknown kind {ev.kind!r}")
    if not isinstance(ev.t, (int, float)) or ev.t < last_t:
        raise MalformedEventError(i, f"time {ev.t!r} out of order")
    if not isinstance(ev.payload, dict):
        raise MalformedEventError(i, "payload must be an object")


def replay(trace, system: SystemConfig = SystemConfig()) -> MetricsReport:
    trace = list(trace)
    if not trace:
        return MetricsReport()

    mounts = MountTable().mount("/videos", BackendDescriptor("videos", "in-memory-mock"))
    store = TieredStore(list(system.tiers), system.allocator, system.evictor, mounts,
                        backend_cost=system.backend_cost)
    meta = MetaStore()
    log = AccessLog()
    policy = FramePolicy(system.frame_interval)
    extractor = ExtractorConfig(labels_per_frame=system.labels_per_frame)
    learn_sampler = PreLearningSampler(system.pre_learning) if system.pre_learning else None
    memo_sampler = PreMemorizationSampler(system.pre_memorization) if system.pre_memorization else None

    by_path = {}
    sizes: dict[str, int] = {}
    writes, reads, queries = [], [], []
    ingested = unresolved = 0
    pf_attempted = pf_promoted = pf_skipped = 0

    def read(path: str, t: float) -> float | None:
        nonlocal unresolved
        rec = by_path.get(path)
        if rec is None:
            unresolved += 1
            return None
        _, receipt = store.read_block(path)
        reads.append(receipt.modeled_latency)
        log.record_access(AccessLogEntry(t, path, rec.user_id, rec.labels, rec.location))
        return receipt.modeled_latency

    next_boundary = None
    last_t = float("-inf")
    for i, ev in enumerate(trace):
        _check_event(i, ev, last_t)
        last_t = ev.t
        if next_boundary is None:
            next_boundary = (ev.t // PERIOD + 1) * PERIOD
        while ev.t >= next_boundary:
            if system.prefetch_strategy != "none" and store.load() < system.load_threshold:
                plan = make_plan(system.prefetch_strategy, log, next_boundary,
                                 system.prefetch_budget, sizes, meta)
                rep = execute_plan(plan, store, system.load_threshold)
                pf_attempted += rep.attempted
                pf_promoted += rep.promoted
                pf_skipped += rep.skipped
            next_boundary += PERIOD

        try:
            if ev.kind == "ingest":
                p = ev.payload
                stream = synthetic_stream(p["session_id"], p["user_id"], p["start_timestamp"],
                                          p["duration"], p["location"], seed=p["seed"],
                                          nominal_size=p.get("nominal_size"))
                before = store.metrics_snapshot().latency["write"]
                ingested += 1
                out = process_stream(stream, policy, extractor, store, meta, sampler=learn_sampler,
                                     memorization_sampler=memo_sampler)
                if not isinstance(out, Skipped):
                    writes.append(store.metrics_snapshot().latency["write"] - before)
                    by_path[out.object_path] = out
                    sizes[out.object_path] = store.block(out.object_path).size
            elif ev.kind == "read":
                read(ev.payload["object_path"], ev.t)
            else:
                pred = QueryPredicate.from_dict(ev.payload["predicate"])
                limit = int(ev.payload.get("limit", 1))
                found = meta.query(pred)
                found.sort(key=lambda r: (-r.timestamp, r.session_id))
                cost = system.query_overhead_ms
                for rec in found[:limit]:
                    cost += read(rec.object_path, ev.t) or 0.0
                queries.append(cost)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, RoboCloudError) and not isinstance(exc, ConfigError):
                raise
            raise MalformedEventError(i, f"{type(exc).__name__}: {exc}") from exc

    m = store.metrics_snapshot()
    w, r, q = LatencyStats.of(writes), LatencyStats.of(reads), LatencyStats.of(queries)
    row = RunMetrics(
        strategy=system.prefetch_strategy,
        allocator=AllocatorKind.parse(system.allocator).value,
        events=len(trace),
        ingested=ingested,
        records=len(meta),
        rejected_pre_learning=learn_sampler.rejected if learn_sampler else 0,
        rejected_pre_memorization=memo_sampler.rejected if memo_sampler else 0,
        reads=m.reads, hits=m.hits, misses=m.misses, unresolved_reads=unresolved,
        hit_rate=m.hit_rate,
        write_count=w.count, write_mean_ms=w.mean, write_p95_ms=w.p95,
        read_mean_ms=r.mean, read_p95_ms=r.p95,
        query_count=q.count, query_mean_ms=q.mean, query_p95_ms=q.p95,
        moves_total=m.total_moves,
        prefetch_attempted=pf_attempted, prefetch_promoted=pf_promoted, prefetch_skipped=pf_skipped,
    )
    return MetricsReport(m.hit_rate, w, r, q, m.total_moves, (row,))
