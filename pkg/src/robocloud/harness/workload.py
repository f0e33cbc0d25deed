"""Seeded synthetic workloads with daily periodicity.

Each user ("group") records a few streams a day. Every 4-hour period of a
day has one hot group that most queries target; on the next day the same
period keeps its hot group with probability ``period_locality``. Inside a
group, key lookups hit the newest ``working_set`` objects uniformly; recall
queries (label, location, time range) look at one random past day inside the
span of that working set, with Zipf distributed labels and locations.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import asdict, dataclass, field
from typing import IO, Iterable

import numpy as np

from ..errors import ConfigError
from ..learning import DEFAULT_VOCABULARY, LOCATIONS, object_path
from ..metastore import iter_jsonl
from ..prefetch import DAY, PERIOD
from ..tiered import MB

# Monday 2023-11-13 00:00 UTC; trace clocks start at a day boundary
EPOCH = 1_699_833_600
PERIODS_PER_DAY = DAY // PERIOD
EVENT_KINDS = ("ingest", "query", "read")

DEFAULT_QUERY_MIX = {"key": 0.4, "label": 0.3, "location": 0.15, "time_range": 0.15}


@dataclass(frozen=True)
class WorkloadConfig:
    days: int = 30
    users: int = 12
    streams_per_user_per_day: int = 4
    avg_object_size: int = 10 * MB
    label_popularity: float = 1.0
    period_locality: float = 0.9
    query_mix: dict = field(default_factory=lambda: dict(DEFAULT_QUERY_MIX))
    seed: int = 42
    queries_per_period: int = 24
    hot_fraction: float = 0.8
    reads_per_query: int = 2
    # key lookups pick uniformly among a group's newest ``working_set`` objects
    working_set: int = 24
    min_duration: float = 20.0
    max_duration: float = 60.0
    fps: float = 1.0

    def __post_init__(self):
        for name in ("days", "users", "streams_per_user_per_day", "queries_per_period", "reads_per_query",
                     "working_set"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.avg_object_size <= 0:
            raise ConfigError("avg_object_size must be > 0")
        if set(self.query_mix) - set(DEFAULT_QUERY_MIX):
            raise ConfigError(f"query_mix keys must be among {sorted(DEFAULT_QUERY_MIX)}")
        if any(v < 0 for v in self.query_mix.values()) or not math.isclose(sum(self.query_mix.values()), 1.0):
            raise ConfigError("query_mix fractions must be >= 0 and sum to 1")
        for name in ("period_locality", "hot_fraction"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must be in [0, 1]")
        if not 0 < self.min_duration <= self.max_duration:
            raise ConfigError("need 0 < min_duration <= max_duration")
        if self.label_popularity < 0:
            raise ConfigError("label_popularity must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TraceEvent:
    t: float
    kind: str
    payload: dict

    def to_dict(self) -> dict:
        return {"t": self.t, "kind": self.kind, "payload": self.payload}

    @classmethod
    def from_dict(cls, d: dict) -> "TraceEvent":
        return cls(d["t"], d["kind"], d["payload"])


@dataclass
class Workload:
    events: list[TraceEvent]
    # hot group per (day, period), as drawn by the generator
    hot_groups: list[list[str]]

    def __iter__(self):
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)


def zipf_weights(n: int, exponent: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1) ** exponent
    return w / w.sum()


def _t(x: float) -> float:
    return round(float(x), 3)


def generate_workload(config: WorkloadConfig) -> Workload:
    rng = np.random.default_rng(config.seed)
    groups = [f"user{i:03d}" for i in range(config.users)]
    label_p = zipf_weights(len(DEFAULT_VOCABULARY), config.label_popularity)
    loc_p = zipf_weights(len(LOCATIONS), config.label_popularity)
    kinds = [k for k in DEFAULT_QUERY_MIX if config.query_mix.get(k, 0) > 0]
    kind_p = np.array([config.query_mix[k] for k in kinds], dtype=float)
    kind_p /= kind_p.sum() if kind_p.size else 1.0

    events: list[tuple[float, int, int, TraceEvent]] = []
    hot: list[list[str]] = []
    # per group: ingest-completion times and object paths
    avail: dict[str, tuple[list[float], list[str]]] = {g: ([], []) for g in groups}
    seq = 0
    span_days = max(1, math.ceil(config.working_set / max(1, config.streams_per_user_per_day)))
    if not groups:
        return Workload([], [])

    for day in range(config.days):
        day_start = EPOCH + day * DAY
        if day == 0:
            today = [groups[rng.integers(len(groups))] for _ in range(PERIODS_PER_DAY)]
        else:
            today = []
            for prev in hot[-1]:
                if len(groups) == 1 or rng.random() < config.period_locality:
                    today.append(prev)
                else:
                    others = [g for g in groups if g != prev]
                    today.append(others[rng.integers(len(others))])
        hot.append(today)

        ingests = []
        for g in groups:
            for k in range(config.streams_per_user_per_day):
                duration = _t(rng.uniform(config.min_duration, config.max_duration))
                start = _t(day_start + rng.uniform(0, DAY - config.max_duration - 1))
                size = int(config.avg_object_size * rng.uniform(0.5, 1.5))
                loc = LOCATIONS[rng.choice(len(LOCATIONS), p=loc_p)]
                sid = f"{g}-d{day:03d}-s{k}"
                payload = {"session_id": sid, "user_id": g, "start_timestamp": start,
                           "duration": duration, "location": loc,
                           "seed": int(rng.integers(2**31)), "nominal_size": size}
                ingests.append((_t(start + duration), g, sid, start, payload))
        ingests.sort(key=lambda x: (x[0], x[2]))
        for done, g, sid, start, payload in ingests:
            events.append((done, 0, seq, TraceEvent(done, "ingest", payload)))
            seq += 1
            times, paths = avail[g]
            times.append(done)
            paths.append(object_path(g, sid, start))

        for p in range(PERIODS_PER_DAY):
            p_start = day_start + p * PERIOD
            for t in np.sort(rng.uniform(p_start, p_start + PERIOD, config.queries_per_period)):
                t = _t(t)
                g = today[p] if rng.random() < config.hot_fraction else groups[rng.integers(len(groups))]
                times, paths = avail[g]
                n = bisect.bisect_left(times, t)
                kind = kinds[rng.choice(len(kinds), p=kind_p)] if kinds else None
                if n == 0 or kind is None:
                    continue
                if kind == "key":
                    lo = max(0, n - config.working_set)
                    path = paths[lo + rng.integers(n - lo)]
                    ev = TraceEvent(t, "read", {"object_path": path})
                else:
                    # recall queries look at one past day inside the working-set span
                    d = 1 + int(rng.integers(span_days))
                    window = [_t(t - (d + 1) * DAY), _t(t - d * DAY)]
                    if kind == "label":
                        pred = {"user_id": g, "time_range": window,
                                "labels_any": [DEFAULT_VOCABULARY[rng.choice(len(label_p), p=label_p)]]}
                    elif kind == "location":
                        pred = {"user_id": g, "time_range": window,
                                "location": LOCATIONS[rng.choice(len(loc_p), p=loc_p)]}
                    else:
                        pred = {"user_id": g, "time_range": window}
                    ev = TraceEvent(t, "query", {"predicate": pred, "limit": config.reads_per_query})
                events.append((t, 1, seq, ev))
                seq += 1

    events.sort(key=lambda x: x[:3])
    return Workload([e for *_, e in events], hot)


def hot_group_repeat_rate(hot_groups: list[list[str]]) -> float:
    """Fraction of (day, period) slots whose hot group equals the previous day's."""
    same = total = 0
    for prev, cur in zip(hot_groups, hot_groups[1:]):
        for a, b in zip(prev, cur):
            same += a == b
            total += 1
    return same / total if total else 0.0


def observed_hot_groups(events: Iterable[TraceEvent], path_group=lambda p: p.split("/")[2]) -> dict:
    """Most-targeted group per (day, period), recovered from the trace alone."""
    counts: dict[tuple[int, int], dict[str, int]] = {}
    for ev in events:
        if ev.kind == "read":
            g = path_group(ev.payload["object_path"])
        elif ev.kind == "query":
            g = ev.payload["predicate"].get("user_id")
        else:
            continue
        slot = (int((ev.t - EPOCH) // DAY), int(((ev.t - EPOCH) % DAY) // PERIOD))
        c = counts.setdefault(slot, {})
        c[g] = c.get(g, 0) + 1
    return {slot: min(c, key=lambda g: (-c[g], g)) for slot, c in counts.items()}


def write_trace(events: Iterable[TraceEvent], fh: IO[str]) -> None:
    for ev in events:
        fh.write(json.dumps(ev.to_dict(), sort_keys=True) + "\n")


def read_trace(fh: IO[str]) -> list[TraceEvent]:
    return [TraceEvent.from_dict(d) for d in iter_jsonl(fh)]
