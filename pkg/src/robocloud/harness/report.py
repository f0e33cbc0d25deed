"""Metrics reports and their CSV / JSON serializations.

Serialization is byte-stable: fixed column order, sorted JSON keys, floats
written with ``repr``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class LatencyStats:
    count: int = 0
    mean: float = 0.0
    p95: float = 0.0

    @classmethod
    def of(cls, values) -> "LatencyStats":
        if not len(values):
            return cls()
        return cls(len(values), math.fsum(values) / len(values), float(np.percentile(values, 95)))


@dataclass(frozen=True)
class RunMetrics:
    """One replay: a strategy / allocator combination over one trace."""

    strategy: str = "none"
    allocator: str = ""
    events: int = 0
    ingested: int = 0
    records: int = 0
    rejected_pre_learning: int = 0
    rejected_pre_memorization: int = 0
    reads: int = 0
    hits: int = 0
    misses: int = 0
    unresolved_reads: int = 0
    hit_rate: float = 0.0
    write_count: int = 0
    write_mean_ms: float = 0.0
    write_p95_ms: float = 0.0
    read_mean_ms: float = 0.0
    read_p95_ms: float = 0.0
    query_count: int = 0
    query_mean_ms: float = 0.0
    query_p95_ms: float = 0.0
    moves_total: int = 0
    prefetch_attempted: int = 0
    prefetch_promoted: int = 0
    prefetch_skipped: int = 0


CSV_COLUMNS = tuple(f.name for f in fields(RunMetrics))


@dataclass(frozen=True)
class MetricsReport:
    hit_rate: float = 0.0
    write_latency: LatencyStats = LatencyStats()
    read_latency: LatencyStats = LatencyStats()
    query_latency: LatencyStats = LatencyStats()
    moves_total: int = 0
    breakdowns: tuple[RunMetrics, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not 0.0 <= self.hit_rate <= 1.0:
            raise ValueError(f"hit_rate out of range: {self.hit_rate}")

    @classmethod
    def combine(cls, reports: list["MetricsReport"]) -> "MetricsReport":
        """Headline figures from the first report, breakdown rows from all."""
        if not reports:
            return cls()
        head = reports[0]
        rows = tuple(r for rep in reports for r in rep.breakdowns)
        return cls(head.hit_rate, head.write_latency, head.read_latency, head.query_latency,
                   head.moves_total, rows)

    def by_strategy(self) -> dict[str, RunMetrics]:
        return {r.strategy: r for r in self.breakdowns}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["breakdowns"] = [asdict(r) for r in self.breakdowns]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(
            hit_rate=d["hit_rate"],
            write_latency=LatencyStats(**d["write_latency"]),
            read_latency=LatencyStats(**d["read_latency"]),
            query_latency=LatencyStats(**d["query_latency"]),
            moves_total=d["moves_total"],
            breakdowns=tuple(RunMetrics(**r) for r in d["breakdowns"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.breakdowns:
            writer.writerow([_cell(getattr(row, c)) for c in CSV_COLUMNS])
        return buf.getvalue()


def _cell(v):
    return repr(v) if isinstance(v, float) else v


def export_report(report: MetricsReport, path: str | Path, format: str | None = None) -> Path:
    path = Path(path)
    format = format or path.suffix.lstrip(".") or "json"
    if format == "json":
        text = report.to_json()
    elif format == "csv":
        text = report.to_csv()
    else:
        raise ValueError(f"unsupported report format {format!r}")
    path.write_text(text, encoding="utf-8", newline="")
    return path


def load_report(path: str | Path) -> MetricsReport:
    return MetricsReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
