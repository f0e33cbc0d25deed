"""Benchmarks and scripted experiments over the store and the replay harness."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ..backend import BackendDescriptor, MountTable
from ..tiered import BACKEND, MB, AllocatorKind, Block, TierConfig, TieredStore, default_tiers
from .config import SimulationConfig
from .replay import replay
from .report import MetricsReport
from .workload import generate_workload

BENCH_PREFIX = "/bench"


def bench_mounts() -> MountTable:
    return MountTable().mount(BENCH_PREFIX, BackendDescriptor("bench", "in-memory-mock"))


def bench_block(i: int, size: int) -> Block:
    return Block(f"b{i}", size, f"{BENCH_PREFIX}/b{i}")


# -- end-to-end simulation --------------------------------------------------

def simulate(config: SimulationConfig = SimulationConfig()) -> MetricsReport:
    """Generate the configured workload and replay it once per strategy."""
    trace = generate_workload(config.workload).events
    reports = [replay(trace, config.system.with_strategy(s)) for s in config.strategies]
    return MetricsReport.combine(reports)


# -- allocator enumeration ----------------------------------------------------

@dataclass(frozen=True)
class AllocatorCase:
    capacities: tuple[int, ...]
    occupancy: tuple[int, ...]
    cascade_moves: int
    direct_moves: int
    cascade_latency: float
    direct_latency: float

    @property
    def full(self) -> bool:
        return self.capacities == self.occupancy


def _slot_tiers(capacities, slot: int) -> list[TierConfig]:
    return default_tiers(*(c * slot for c in capacities))


def run_case(capacities, occupancy, allocator, slot: int = 10 * MB):
    """Fill each tier to ``occupancy`` slots, then write one more block."""
    store = TieredStore(_slot_tiers(capacities, slot), allocator, backend=bench_mounts())
    n = 0
    for name, count in zip(store.tier_names, occupancy):
        for _ in range(count):
            store.place(bench_block(n, slot), b"x", name)
            n += 1
    return store.write_block(bench_block(n, slot), b"new")


def enumerate_allocator_states(max_slots: int = 4, tiers: int = 3, slot: int = 10 * MB) -> list[AllocatorCase]:
    """Every capacity vector in 1..max_slots and every occupancy under it."""
    cases = []
    for caps in itertools.product(range(1, max_slots + 1), repeat=tiers):
        for occ in itertools.product(*(range(c + 1) for c in caps)):
            c = run_case(caps, occ, AllocatorKind.DEFAULT_CASCADE, slot)
            d = run_case(caps, occ, AllocatorKind.DIRECT_WRITE, slot)
            cases.append(AllocatorCase(caps, occ, len(c.moves), len(d.moves),
                                       c.modeled_latency, d.modeled_latency))
    return cases


# -- saturation write script --------------------------------------------------

SATURATION_TIERS = (50 * MB, 100 * MB, 200 * MB)


@dataclass(frozen=True)
class SaturationResult:
    writes: int
    mean_latency: dict[str, float]
    total_moves: dict[str, int]

    @property
    def ratio(self) -> float:
        """Cascade mean write latency over DirectWrite's."""
        return self.mean_latency["DefaultCascade"] / self.mean_latency["DirectWrite"]


def saturation_sizes(n: int = 1000, seed: int = 42, low: int = 5 * MB, high: int = 15 * MB) -> list[int]:
    rng = np.random.default_rng(seed)
    return [int(s) for s in rng.integers(low, high + 1, size=n)]


def saturation_script(n: int = 1000, seed: int = 42, capacities=SATURATION_TIERS) -> SaturationResult:
    """Identical random-size write sequence against both allocators."""
    sizes = saturation_sizes(n, seed)
    means, moves = {}, {}
    for kind in AllocatorKind:
        store = TieredStore(default_tiers(*capacities), kind, backend=bench_mounts())
        total = 0.0
        for i, size in enumerate(sizes):
            total += store.write_block(bench_block(i, size), b"").modeled_latency
        means[kind.value] = total / n
        moves[kind.value] = store.metrics_snapshot().total_moves
    return SaturationResult(n, means, moves)


# -- prefetch comparison ------------------------------------------------------

def bench_prefetch(config: SimulationConfig = SimulationConfig(),
                   strategies=("none", "most-requested", "time-period", "label-hot", "location-hot")
                   ) -> MetricsReport:
    trace = generate_workload(config.workload).events
    return MetricsReport.combine([replay(trace, config.system.with_strategy(s)) for s in strategies])


# -- soak -----------------------------------------------------------------------

@dataclass
class SoakResult:
    operations: int
    counts: dict[str, int] = field(default_factory=dict)
    blocks: int = 0
    mismatches: int = 0


def soak(operations: int = 10_000, seed: int = 42, allocator: str = "DefaultCascade",
         capacities=(2 * MB, 4 * MB, 8 * MB), check_every: int = 1) -> SoakResult:
    """Random write/read/promote sequence checked against a reference map.

    Tier invariants are asserted every ``check_every`` operations and every
    payload is compared with the reference at the end.
    """
    rng = np.random.default_rng(seed)
    store = TieredStore(default_tiers(*capacities), allocator, backend=bench_mounts())
    reference: dict[str, bytes] = {}
    ids: list[str] = []
    result = SoakResult(operations)
    tiers = store.tier_names
    for step in range(operations):
        op = "write" if not ids else ("write", "read", "promote")[int(rng.choice(3, p=[0.4, 0.4, 0.2]))]
        result.counts[op] = result.counts.get(op, 0) + 1
        if op == "write":
            size = int(rng.integers(1, 600_000))
            payload = rng.bytes(int(rng.integers(1, 64)))
            block = bench_block(len(ids), size)
            store.write_block(block, payload)
            reference[block.id] = payload
            ids.append(block.id)
        else:
            bid = ids[int(rng.integers(len(ids)))]
            if op == "read":
                data, _ = store.read_block(bid)
                if data != reference[bid]:
                    result.mismatches += 1
            else:
                store.promote_block(bid, tiers[int(rng.integers(len(tiers)))])
        if step % check_every == 0:
            store.check_invariants()
    store.check_invariants()
    for bid, payload in reference.items():
        data, _ = store.read_block(bid)
        if data != payload:
            result.mismatches += 1
    result.blocks = len(ids)
    return result


def residency(store: TieredStore) -> dict[str, int]:
    """Block count per tier plus ``backend``."""
    out = {name: len(store.resident(name)) for name in store.tier_names}
    out[BACKEND] = len(store) - sum(out.values())
    return out
