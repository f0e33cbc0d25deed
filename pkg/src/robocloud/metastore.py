"""Metadata store for session records with multi-attribute recall queries.

Records are keyed by ``(session_id, timestamp)``. Secondary indexes: a sorted
time index, hash indexes on location / session / user, and an inverted index
per label. A query intersects the postings of every field it sets.
"""

from __future__ import annotations

import bisect
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

from ._rwlock import RWLock
from .backend import normalize_path
from .errors import (
    DuplicateRecordError,
    InvalidPredicateError,
    InvalidRecordError,
    MissingRecordError,
)

RECORD_FIELDS = ("session_id", "user_id", "timestamp", "duration", "location", "labels", "object_path")

Key = tuple[str, float]


@dataclass(frozen=True)
class SessionRecord:
    session_id: str
    user_id: str
    timestamp: float
    duration: float
    location: str
    labels: frozenset[str]
    object_path: str

    def __post_init__(self):
        if not isinstance(self.labels, frozenset):
            object.__setattr__(self, "labels", frozenset(self.labels))
        if not self.location:
            raise InvalidRecordError("location must be non-empty")
        if self.duration < 0 or not math.isfinite(self.duration):
            raise InvalidRecordError("duration must be a finite value >= 0")
        if not math.isfinite(self.timestamp):
            raise InvalidRecordError("timestamp must be finite")
        try:
            object.__setattr__(self, "object_path", normalize_path(self.object_path))
        except ValueError as exc:
            raise InvalidRecordError(str(exc)) from None

    @property
    def key(self) -> Key:
        return (self.session_id, self.timestamp)

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "user_id": self.user_id,
            "timestamp": self.timestamp,
            "duration": self.duration,
            "location": self.location,
            "labels": sorted(self.labels),
            "object_path": self.object_path,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionRecord":
        missing = [f for f in RECORD_FIELDS if f not in d]
        if missing:
            raise InvalidRecordError(f"record missing fields {missing}")
        return cls(str(d["session_id"]), str(d["user_id"]), d["timestamp"], d["duration"],
                   d["location"], frozenset(d["labels"]), d["object_path"])


@dataclass(frozen=True)
class QueryPredicate:
    """Conjunction of optional constraints.

    ``time_range`` is inclusive on both ends. ``labels_any`` needs a non-empty
    intersection with the record's labels, ``labels_all`` needs a subset.
    """

    time_range: tuple[float, float] | None = None
    location: str | None = None
    labels_any: frozenset[str] | None = None
    labels_all: frozenset[str] | None = None
    session_id: str | None = None
    user_id: str | None = None

    def __post_init__(self):
        for name in ("labels_any", "labels_all"):
            value = getattr(self, name)
            if value is not None and not isinstance(value, frozenset):
                object.__setattr__(self, name, frozenset(value))
        if self.time_range is not None:
            start, end = self.time_range
            if start > end:
                raise InvalidPredicateError(f"time_range start {start} > end {end}")
            object.__setattr__(self, "time_range", (start, end))
        if all(getattr(self, f) is None for f in self.__dataclass_fields__):
            raise InvalidPredicateError("predicate must set at least one field")

    def matches(self, r: SessionRecord) -> bool:
        if self.time_range is not None and not (self.time_range[0] <= r.timestamp <= self.time_range[1]):
            return False
        if self.location is not None and r.location != self.location:
            return False
        if self.labels_any is not None and not (self.labels_any & r.labels):
            return False
        if self.labels_all is not None and not (self.labels_all <= r.labels):
            return False
        if self.session_id is not None and r.session_id != self.session_id:
            return False
        if self.user_id is not None and r.user_id != self.user_id:
            return False
        return True

    def to_dict(self) -> dict:
        out = {}
        if self.time_range is not None:
            out["time_range"] = list(self.time_range)
        for name in ("location", "session_id", "user_id"):
            if getattr(self, name) is not None:
                out[name] = getattr(self, name)
        for name in ("labels_any", "labels_all"):
            if getattr(self, name) is not None:
                out[name] = sorted(getattr(self, name))
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "QueryPredicate":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidPredicateError(f"unknown predicate fields {sorted(unknown)}")
        kw = dict(d)
        if kw.get("time_range") is not None:
            kw["time_range"] = tuple(kw["time_range"])
        return cls(**kw)


@dataclass(frozen=True)
class LabelStat:
    label: str
    count: int


def _sort_key(r: SessionRecord):
    return (r.timestamp, r.session_id)


@dataclass
class MetaStore:
    _records: dict[Key, SessionRecord] = field(default_factory=dict)
    _time: list[tuple[float, str]] = field(default_factory=list)
    _location: dict[str, set[Key]] = field(default_factory=dict)
    _label: dict[str, set[Key]] = field(default_factory=dict)
    _session: dict[str, set[Key]] = field(default_factory=dict)
    _user: dict[str, set[Key]] = field(default_factory=dict)
    _lock: RWLock = field(default_factory=RWLock, repr=False)

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, key: Key) -> bool:
        return key in self._records

    def put_record(self, record: SessionRecord) -> Key:
        if not isinstance(record, SessionRecord):
            raise InvalidRecordError(f"expected SessionRecord, got {type(record).__name__}")
        key = record.key
        with self._lock.write():
            if key in self._records:
                raise DuplicateRecordError(f"record {key} already stored")
            self._records[key] = record
            bisect.insort(self._time, (record.timestamp, record.session_id))
            self._location.setdefault(record.location, set()).add(key)
            self._session.setdefault(record.session_id, set()).add(key)
            self._user.setdefault(record.user_id, set()).add(key)
            for label in record.labels:
                self._label.setdefault(label, set()).add(key)
        return key

    def get_by_key(self, session_id: str, timestamp: float) -> SessionRecord:
        with self._lock.read():
            try:
                return self._records[(session_id, timestamp)]
            except KeyError:
                raise MissingRecordError(f"no record for ({session_id!r}, {timestamp})") from None

    def records(self) -> list[SessionRecord]:
        with self._lock.read():
            return sorted(self._records.values(), key=_sort_key)

    def _time_keys(self, start: float, end: float) -> set[Key]:
        lo = bisect.bisect_left(self._time, (start, ""))
        out = set()
        for ts, sid in self._time[lo:]:
            if ts > end:
                break
            out.add((sid, ts))
        return out

    def _candidates(self, p: QueryPredicate) -> set[Key] | None:
        sets: list[set[Key]] = []
        if p.session_id is not None:
            sets.append(self._session.get(p.session_id, set()))
        if p.user_id is not None:
            sets.append(self._user.get(p.user_id, set()))
        if p.location is not None:
            sets.append(self._location.get(p.location, set()))
        if p.labels_all is not None:
            for label in p.labels_all:
                sets.append(self._label.get(label, set()))
        if p.labels_any is not None:
            union: set[Key] = set()
            for label in p.labels_any:
                union |= self._label.get(label, set())
            sets.append(union)
        if p.time_range is not None:
            sets.append(self._time_keys(*p.time_range))
        if not sets:
            # labels_all == frozenset() is a vacuous constraint
            return None
        sets.sort(key=len)
        out = set(sets[0])
        for s in sets[1:]:
            if not out:
                break
            out &= s
        return out

    def query(self, predicate: QueryPredicate) -> list[SessionRecord]:
        with self._lock.read():
            keys = self._candidates(predicate)
            pool = self._records.values() if keys is None else (self._records[k] for k in keys)
            found = [r for r in pool if predicate.matches(r)]
        found.sort(key=_sort_key)
        return found

    def count(self, predicate: QueryPredicate) -> int:
        return len(self.query(predicate))

    def top_labels(self, k: int, location: str | None = None,
                   time_range: tuple[float, float] | None = None) -> list[LabelStat]:
        if k < 1:
            raise ValueError("k must be >= 1")
        if location is None and time_range is None:
            rows: Iterable[SessionRecord] = self.records()
        else:
            rows = self.query(QueryPredicate(time_range=time_range, location=location))
        counts = Counter(label for r in rows for label in r.labels)
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return [LabelStat(label, n) for label, n in ranked[:k]]

    # -- JSON Lines --

    def export_jsonl(self, fh: IO[str]) -> int:
        n = 0
        for r in self.records():
            fh.write(json.dumps(r.to_dict(), sort_keys=False) + "\n")
            n += 1
        return n

    def import_jsonl(self, fh: IO[str]) -> int:
        n = 0
        for line in iter_jsonl(fh):
            self.put_record(SessionRecord.from_dict(line))
            n += 1
        return n


def iter_jsonl(fh: IO[str]) -> Iterator[dict]:
    for lineno, line in enumerate(fh, 1):
        line = line.strip()
        if not line:
            continue
        try:
            yield json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
