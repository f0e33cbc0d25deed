"""Access-log driven prefetch planning and best-effort promotion.

Planning is a pure function of a log snapshot. Strategies:

* ``most-requested``: groups ranked by all-time access count.
* ``time-period``: groups ranked by accesses during the same 4-hour period
  of the previous day (the day is cut into six periods).
* ``label-hot`` / ``location-hot``: the most accessed labels / locations,
  expanded to the matching records in the metastore.

Candidates are whole objects taken in rank order until the next one would
overflow the byte budget. Within a group, objects are ordered by their most
recent access.
"""

from __future__ import annotations

import bisect
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Callable, Iterable, Mapping

from .errors import TimeRegressionError
from .metastore import MetaStore, QueryPredicate, iter_jsonl
from .tiered import BACKEND, TieredStore

DAY = 86_400
PERIOD = 14_400
STRATEGIES = ("none", "most-requested", "time-period", "label-hot", "location-hot")


def period_index(t: float) -> int:
    return int((t % DAY) // PERIOD)


def previous_day_window(now: float) -> tuple[float, float]:
    """Half-open ``[start, end)`` of the same period one day before ``now``."""
    day_start = now - now % DAY
    start = day_start - DAY + period_index(now) * PERIOD
    return start, start + PERIOD


@dataclass(frozen=True)
class AccessLogEntry:
    timestamp: float
    object_path: str
    table_or_group: str
    labels: frozenset[str] = frozenset()
    location: str = ""

    def __post_init__(self):
        if not isinstance(self.labels, frozenset):
            object.__setattr__(self, "labels", frozenset(self.labels))

    def to_dict(self) -> dict:
        return {"timestamp": self.timestamp, "object_path": self.object_path,
                "table_or_group": self.table_or_group, "labels": sorted(self.labels),
                "location": self.location}

    @classmethod
    def from_dict(cls, d: dict) -> "AccessLogEntry":
        return cls(d["timestamp"], d["object_path"], d["table_or_group"],
                   frozenset(d.get("labels", ())), d.get("location", ""))


class AccessLog:
    """Append-only, time-ordered access log."""

    def __init__(self, entries: Iterable[AccessLogEntry] = ()):
        self.entries: list[AccessLogEntry] = []
        self._times: list[float] = []
        self.group_counts: Counter[str] = Counter()
        for e in entries:
            self.record_access(e)

    def __len__(self) -> int:
        return len(self.entries)

    def record_access(self, entry: AccessLogEntry) -> "AccessLog":
        if self._times and entry.timestamp < self._times[-1]:
            raise TimeRegressionError(
                f"access at {entry.timestamp} precedes last entry at {self._times[-1]}")
        self.entries.append(entry)
        self._times.append(entry.timestamp)
        self.group_counts[entry.table_or_group] += 1
        return self

    def window(self, start: float, end: float) -> list[AccessLogEntry]:
        lo = bisect.bisect_left(self._times, start)
        hi = bisect.bisect_left(self._times, end)
        return self.entries[lo:hi]

    def save_jsonl(self, fh: IO[str]) -> None:
        for e in self.entries:
            fh.write(json.dumps(e.to_dict()) + "\n")

    @classmethod
    def load_jsonl(cls, fh: IO[str]) -> "AccessLog":
        return cls(AccessLogEntry.from_dict(d) for d in iter_jsonl(fh))


@dataclass(frozen=True)
class PrefetchPlan:
    strategy: str
    candidates: tuple[str, ...]
    byte_budget: int
    total_bytes: int = 0

    def to_dict(self) -> dict:
        return {"strategy": self.strategy, "candidates": list(self.candidates),
                "byte_budget": self.byte_budget, "total_bytes": self.total_bytes}


def _fill(strategy: str, ordered: Iterable[str], budget: int, sizes: Mapping[str, int]) -> PrefetchPlan:
    if budget <= 0:
        raise ValueError("byte_budget must be > 0")
    seen: set[str] = set()
    out: list[str] = []
    total = 0
    for path in ordered:
        if path in seen or path not in sizes:
            continue
        seen.add(path)
        if total + sizes[path] > budget:
            break
        out.append(path)
        total += sizes[path]
    return PrefetchPlan(strategy, tuple(out), budget, total)


def _rank(counter: Counter) -> list:
    return [k for k, _ in sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))]


def _group_order(ranked_by: list[AccessLogEntry], log: AccessLog) -> list[str]:
    """Objects of groups ranked by access count in ``ranked_by``.

    A group's objects are every path it has in ``log``, most recently
    accessed first.
    """
    groups = Counter(e.table_or_group for e in ranked_by)
    if not groups:
        return []
    last: dict[str, dict[str, float]] = {}
    for e in log.entries:
        if e.table_or_group in groups:
            last.setdefault(e.table_or_group, {})[e.object_path] = e.timestamp
    out = []
    for g in _rank(groups):
        seen = last[g]
        out.extend(sorted(seen, key=lambda p: (-seen[p], p)))
    return out


def plan_most_requested(log: AccessLog, byte_budget: int, sizes: Mapping[str, int]) -> PrefetchPlan:
    return _fill("most-requested", _group_order(log.entries, log), byte_budget, sizes)


def plan_time_period(log: AccessLog, now: float, byte_budget: int, sizes: Mapping[str, int]) -> PrefetchPlan:
    start, end = previous_day_window(now)
    return _fill("time-period", _group_order(log.window(start, end), log), byte_budget, sizes)


def _newest_first(records) -> list[str]:
    return [r.object_path for r in sorted(records, key=lambda r: (-r.timestamp, r.session_id))]


def plan_label_hot(log: AccessLog, metastore: MetaStore, byte_budget: int,
                   sizes: Mapping[str, int]) -> PrefetchPlan:
    counts = Counter(label for e in log.entries for label in e.labels)

    def ordered():
        for label in _rank(counts):
            yield from _newest_first(metastore.query(QueryPredicate(labels_any={label})))

    return _fill("label-hot", ordered(), byte_budget, sizes)


def plan_location_hot(log: AccessLog, metastore: MetaStore, byte_budget: int,
                      sizes: Mapping[str, int]) -> PrefetchPlan:
    counts = Counter(e.location for e in log.entries if e.location)

    def ordered():
        for loc in _rank(counts):
            yield from _newest_first(metastore.query(QueryPredicate(location=loc)))

    return _fill("location-hot", ordered(), byte_budget, sizes)


def make_plan(strategy: str, log: AccessLog, now: float, byte_budget: int,
              sizes: Mapping[str, int], metastore: MetaStore | None = None) -> PrefetchPlan:
    if strategy == "none":
        return PrefetchPlan("none", (), byte_budget)
    if strategy == "most-requested":
        return plan_most_requested(log, byte_budget, sizes)
    if strategy == "time-period":
        return plan_time_period(log, now, byte_budget, sizes)
    if strategy == "label-hot":
        return plan_label_hot(log, metastore, byte_budget, sizes)
    if strategy == "location-hot":
        return plan_location_hot(log, metastore, byte_budget, sizes)
    raise ValueError(f"unknown prefetch strategy {strategy!r}")


@dataclass
class PromotionReport:
    attempted: int = 0
    promoted: int = 0
    skipped: int = 0
    reasons: list[tuple[str, str]] = field(default_factory=list)
    modeled_latency: float = 0.0


def execute_plan(plan: PrefetchPlan, store: TieredStore, load_threshold: float,
                 load: Callable[[], float] | None = None) -> PromotionReport:
    """Promote plan candidates into the first tier with room, never evicting.

    Stops as soon as ``load()`` (default: the store's in-flight operation
    count) reaches ``load_threshold``; the remaining candidates are reported
    as skipped with reason ``"gate closed"``.
    """
    load = load or store.load
    report = PromotionReport()

    def skip(path, reason):
        report.skipped += 1
        report.reasons.append((path, reason))

    for path in plan.candidates:
        if load() >= load_threshold:
            skip(path, "gate closed")
            continue
        report.attempted += 1
        block = store.block_for_path(path)
        if block is None:
            skip(path, "unknown object")
            continue
        if store.location(block.id) != BACKEND:
            skip(path, "already resident")
            continue
        target = store.first_tier_with_room(block.size)
        if target is None:
            skip(path, "insufficient space")
            continue
        rec = store.promote_block(block.id, target)
        if rec.promoted:
            report.promoted += 1
            report.modeled_latency += rec.modeled_latency
        else:
            skip(path, rec.reason or "not promoted")
    return report
