"""Deployment arithmetic: machines -> cache size, streams, queries, users."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from ..errors import ConfigError

# absorbs binary rounding in products like (2 / 0.16) * 0.8
_EPS = 1e-9


def _floor(x: float) -> int:
    return int(math.floor(x + _EPS))


@dataclass(frozen=True)
class CapacityPlan:
    machines: int
    cache_bytes: int
    buffered_files: int
    streams_per_server: int
    total_streams: int
    concurrent_queries: int
    supported_users: int

    def to_dict(self) -> dict:
        return asdict(self)


def capacity_plan(machines: int, mem_per_machine: int, hdd_per_machine: int, avg_file: int,
                  per_image_latency: float, frame_interval: float, utilization: float,
                  queries_per_server: int, concurrency_factor: float) -> CapacityPlan:
    """Size a co-located deployment.

    ``concurrency_factor`` is the fraction of users issuing a query at any
    instant, so ``supported_users = concurrent_queries / concurrency_factor``.
    """
    named = dict(machines=machines, mem_per_machine=mem_per_machine, hdd_per_machine=hdd_per_machine,
                 avg_file=avg_file, per_image_latency=per_image_latency, frame_interval=frame_interval,
                 utilization=utilization, queries_per_server=queries_per_server,
                 concurrency_factor=concurrency_factor)
    for name, value in named.items():
        if not value > 0:
            raise ConfigError(f"{name} must be positive, got {value}")
    if utilization > 1 or concurrency_factor > 1:
        raise ConfigError("utilization and concurrency_factor must be in (0, 1]")

    cache = machines * (mem_per_machine + hdd_per_machine)
    streams = _floor(frame_interval / per_image_latency * utilization)
    queries = machines * queries_per_server
    return CapacityPlan(
        machines=machines,
        cache_bytes=int(cache),
        buffered_files=int(cache // avg_file),
        streams_per_server=streams,
        total_streams=machines * streams,
        concurrent_queries=queries,
        supported_users=_floor(queries / concurrency_factor),
    )
