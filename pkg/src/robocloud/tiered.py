"""Tiered block store (memory / SSD / HDD) above a persistent backend.

Every written payload is persisted to the backend as part of the write, off
the modeled foreground path, so a tier copy can always be dropped without
losing data. Two allocators decide where a new block lands:

* ``DefaultCascade`` always writes to the top tier, making room by pushing
  LRU victims one tier down (and out of the bottom tier to the backend).
* ``DirectWrite`` writes to the first tier that already has room, and only
  when nothing has room drops one bottom-tier victim and writes there.

All latencies are modeled (milliseconds), never measured.
"""

from __future__ import annotations

import enum
import threading
from collections import OrderedDict
from concurrent.futures import Future, ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

from .backend import MountTable, normalize_path
from .errors import (
    BlockTooLargeError,
    ConfigError,
    DuplicateBlockError,
    UnknownBlockError,
    UnknownTierError,
)

KB = 1_000
MB = 1_000_000
GB = 1_000_000_000

TIER_ORDER = ("memory", "ssd", "hdd")
BACKEND = "backend"


def transfer_ms(overhead_ms: float, throughput: float, size: int) -> float:
    return overhead_ms + size / throughput * 1000.0


@dataclass(frozen=True)
class TierConfig:
    """One storage tier.

    ``reserve`` bytes of the capacity are headroom that only non-evicting
    placements (read-miss promotion and prefetch) may occupy; writes treat the
    tier as holding ``capacity - reserve`` bytes.
    """

    name: str
    capacity: int
    read_overhead: float
    write_overhead: float
    throughput: float
    reserve: int = 0

    def __post_init__(self):
        if self.name not in TIER_ORDER:
            raise ConfigError(f"tier name must be one of {TIER_ORDER}, got {self.name!r}")
        if self.capacity <= 0:
            raise ConfigError(f"tier {self.name}: capacity must be > 0")
        if self.throughput <= 0:
            raise ConfigError(f"tier {self.name}: throughput must be > 0")
        if self.read_overhead < 0 or self.write_overhead < 0:
            raise ConfigError(f"tier {self.name}: overheads must be >= 0")
        if not 0 <= self.reserve < self.capacity:
            raise ConfigError(f"tier {self.name}: reserve must be in [0, capacity)")

    @property
    def write_limit(self) -> int:
        return self.capacity - self.reserve

    def read_ms(self, size: int) -> float:
        return transfer_ms(self.read_overhead, self.throughput, size)

    def write_ms(self, size: int) -> float:
        return transfer_ms(self.write_overhead, self.throughput, size)


@dataclass(frozen=True)
class BackendCost:
    read_overhead: float = 200.0
    write_overhead: float = 200.0
    throughput: float = 20 * MB

    def read_ms(self, size: int) -> float:
        return transfer_ms(self.read_overhead, self.throughput, size)

    def write_ms(self, size: int) -> float:
        return transfer_ms(self.write_overhead, self.throughput, size)


DEFAULT_COSTS = {
    # name: (overhead ms, throughput bytes/s)
    "memory": (0.1, 650 * MB),
    "ssd": (1.0, 120 * MB),
    "hdd": (5.0, 60 * MB),
}


def default_tiers(memory: int = 1 * GB, ssd: int = 4 * GB, hdd: int = 16 * GB,
                  reserve_fraction: float = 0.0) -> list[TierConfig]:
    out = []
    for name, cap in (("memory", memory), ("ssd", ssd), ("hdd", hdd)):
        if not cap:
            continue
        overhead, tput = DEFAULT_COSTS[name]
        out.append(TierConfig(name, int(cap), overhead, overhead, tput,
                              reserve=int(cap * reserve_fraction)))
    return out


class AllocatorKind(enum.Enum):
    DEFAULT_CASCADE = "DefaultCascade"
    DIRECT_WRITE = "DirectWrite"

    @classmethod
    def parse(cls, value: "AllocatorKind | str") -> "AllocatorKind":
        if isinstance(value, cls):
            return value
        key = str(value).replace("-", "").replace("_", "").lower()
        for member in cls:
            if member.value.lower() == key:
                return member
        raise ConfigError(f"unknown allocator {value!r}")


@dataclass(frozen=True)
class Block:
    id: str
    size: int
    payload_ref: str

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError("block size must be > 0")
        object.__setattr__(self, "payload_ref", normalize_path(self.payload_ref))


class Move(NamedTuple):
    block_id: str
    source: str
    target: str
    size: int


@dataclass(frozen=True)
class WriteReceipt:
    block_id: str
    placed_tier: str
    size: int
    moves: tuple[Move, ...]
    modeled_latency: float


@dataclass(frozen=True)
class ReadReceipt:
    block_id: str
    source: str
    hit: bool
    modeled_latency: float
    promoted_to: str | None = None


@dataclass(frozen=True)
class PromotionRecord:
    block_id: str
    source: str
    target: str
    promoted: bool
    reason: str | None
    modeled_latency: float


@dataclass
class StoreMetrics:
    writes: int = 0
    reads: int = 0
    hits: int = 0
    misses: int = 0
    promotions: int = 0
    total_moves: int = 0
    latency: dict[str, float] = field(
        default_factory=lambda: {"write": 0.0, "read": 0.0, "promote": 0.0})

    @property
    def hit_rate(self) -> float:
        total = self.hits + self.misses
        return self.hits / total if total else 0.0

    def copy(self) -> "StoreMetrics":
        return StoreMetrics(self.writes, self.reads, self.hits, self.misses,
                            self.promotions, self.total_moves, dict(self.latency))


# -- evictors ---------------------------------------------------------------

class LRUEvictor:
    """Least recently used first. One instance per tier."""

    def __init__(self):
        self._order: OrderedDict[str, None] = OrderedDict()

    def add(self, block_id: str) -> None:
        self._order[block_id] = None
        self._order.move_to_end(block_id)

    def touch(self, block_id: str) -> None:
        if block_id in self._order:
            self._order.move_to_end(block_id)

    def remove(self, block_id: str) -> None:
        self._order.pop(block_id, None)

    def victim(self) -> str | None:
        return next(iter(self._order), None)


class FIFOEvictor(LRUEvictor):
    """Oldest insertion first; reads do not refresh."""

    def touch(self, block_id: str) -> None:
        pass


EVICTORS: dict[str, Callable[[], object]] = {"lru": LRUEvictor, "fifo": FIFOEvictor}


def register_evictor(name: str, factory: Callable[[], object]) -> None:
    EVICTORS[name.lower()] = factory


# -- store ------------------------------------------------------------------

@dataclass
class TierState:
    config: TierConfig
    resident: dict[str, int] = field(default_factory=dict)
    used: int = 0

    @property
    def free(self) -> int:
        return self.config.capacity - self.used


class TieredStore:
    """Blocks spread over ordered tiers, persisted beneath to a mount table.

    ``persist_mode="sync"`` persists payloads inline and gives fully
    reproducible behaviour; ``"async"`` hands persistence to a worker pool,
    and any operation that would leave a block only in the backend waits for
    its persist to finish first.
    """

    def __init__(self, tiers: list[TierConfig], allocator: AllocatorKind | str = AllocatorKind.DIRECT_WRITE,
                 evictor: str = "lru", backend: MountTable | None = None,
                 backend_cost: BackendCost | None = None, persist_mode: str = "sync"):
        if not tiers:
            raise ConfigError("no tiers")
        names = [t.name for t in tiers]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate tier names in {names}")
        ranks = [TIER_ORDER.index(n) for n in names]
        if ranks != sorted(ranks):
            raise ConfigError(f"tiers must be ordered {' -> '.join(TIER_ORDER)}, got {names}")
        if evictor.lower() not in EVICTORS:
            raise ConfigError(f"unknown evictor {evictor!r}")
        if persist_mode not in ("sync", "async"):
            raise ConfigError(f"persist_mode must be 'sync' or 'async', got {persist_mode!r}")

        self.allocator = AllocatorKind.parse(allocator)
        self.evictor_name = evictor.lower()
        self.backend = backend if backend is not None else MountTable()
        self.backend_cost = backend_cost or BackendCost()
        self.persist_mode = persist_mode

        self._tiers = [TierState(t) for t in tiers]
        self._index = {t.name: i for i, t in enumerate(tiers)}
        self._evictors = [EVICTORS[self.evictor_name]() for _ in tiers]
        self._blocks: dict[str, Block] = {}
        self._by_path: dict[str, str] = {}
        self._where: dict[str, int | None] = {}
        self._data: dict[str, bytes] = {}
        self._metrics = StoreMetrics()
        self._lock = threading.RLock()
        self._in_flight = 0
        self._inflight_lock = threading.Lock()
        self._pending: dict[str, Future] = {}
        self._pool = ThreadPoolExecutor(max_workers=4) if persist_mode == "async" else None

    # -- introspection --

    @property
    def tier_names(self) -> list[str]:
        return [t.config.name for t in self._tiers]

    def tier_config(self, name: str) -> TierConfig:
        return self._tiers[self._tier_index(name)].config

    def free_space(self, tier: str) -> int:
        with self._lock:
            return self._tiers[self._tier_index(tier)].free

    def used(self, tier: str) -> int:
        with self._lock:
            return self._tiers[self._tier_index(tier)].used

    def resident(self, tier: str) -> dict[str, int]:
        with self._lock:
            return dict(self._tiers[self._tier_index(tier)].resident)

    def location(self, block_id: str) -> str:
        """Tier name holding the block, or ``"backend"``."""
        with self._lock:
            if block_id not in self._blocks:
                raise UnknownBlockError(block_id)
            where = self._where[block_id]
            return BACKEND if where is None else self._tiers[where].config.name

    def block(self, block_id: str) -> Block:
        with self._lock:
            try:
                return self._blocks[block_id]
            except KeyError:
                raise UnknownBlockError(block_id) from None

    def block_for_path(self, path: str) -> Block | None:
        with self._lock:
            bid = self._by_path.get(normalize_path(path))
            return None if bid is None else self._blocks[bid]

    def __contains__(self, block_id: str) -> bool:
        return block_id in self._blocks

    def __len__(self) -> int:
        return len(self._blocks)

    def load(self) -> int:
        """Number of foreground operations currently in flight."""
        return self._in_flight

    def metrics_snapshot(self) -> StoreMetrics:
        with self._lock:
            return self._metrics.copy()

    def check_invariants(self) -> None:
        with self._lock:
            seen: set[str] = set()
            for i, t in enumerate(self._tiers):
                assert t.used == sum(t.resident.values()), f"{t.config.name}: used mismatch"
                assert t.used <= t.config.capacity, f"{t.config.name}: over capacity"
                for bid in t.resident:
                    assert bid not in seen, f"{bid} resident twice"
                    assert self._where[bid] == i
                    seen.add(bid)
            for bid, where in self._where.items():
                if where is None:
                    assert bid not in seen
                    assert bid not in self._data

    # -- cost model --

    def move_cost(self, move: Move) -> float:
        """Modeled cost of one transfer.

        Tier-to-tier and backend-to-tier: read at the source plus write at
        the target. Tier to backend: free, because the payload was persisted
        when it was written and the demotion only drops the tier copy.
        """
        if move.target == BACKEND:
            return 0.0
        src = self._cost_of(move.source)
        dst = self._cost_of(move.target)
        return src.read_ms(move.size) + dst.write_ms(move.size)

    def write_latency(self, moves, placed_tier: str, size: int) -> float:
        placement = self._cost_of(placed_tier).write_ms(size)
        return sum(self.move_cost(m) for m in moves) + placement

    def receipt_latency(self, receipt: WriteReceipt) -> float:
        return self.write_latency(receipt.moves, receipt.placed_tier, receipt.size)

    def read_cost(self, source: str, size: int) -> float:
        return self._cost_of(source).read_ms(size)

    def _cost_of(self, name: str):
        if name == BACKEND:
            return self.backend_cost
        return self._tiers[self._tier_index(name)].config

    # -- operations --

    def write_block(self, block: Block, payload: bytes) -> WriteReceipt:
        with self._busy(), self._lock:
            self._check_new(block)
            self._persist(block, payload)
            moves: list[Move] = []
            if self.allocator is AllocatorKind.DEFAULT_CASCADE:
                target = self._cascade_target(block.size)
                self._make_room(target, block.size, moves)
            else:
                target = self._direct_target(block.size, moves)
            self._register(block)
            self._place(block.id, block.size, target, payload)
            placed = self._tiers[target].config.name
            latency = self.write_latency(moves, placed, block.size)
            receipt = WriteReceipt(block.id, placed, block.size, tuple(moves), latency)
            m = self._metrics
            m.writes += 1
            m.total_moves += len(moves)
            m.latency["write"] += latency
            return receipt

    def place(self, block: Block, payload: bytes, tier: str) -> None:
        """Put a block straight into ``tier`` without running the allocator.

        Used to set up occupancy states for experiments; fails if the tier
        lacks room under its write limit.
        """
        with self._lock:
            idx = self._tier_index(tier)
            self._check_new(block)
            t = self._tiers[idx]
            if t.used + block.size > t.config.write_limit:
                raise BlockTooLargeError(f"no room for {block.id} in {tier}")
            self._persist(block, payload)
            self._register(block)
            self._place(block.id, block.size, idx, payload)

    def read_block(self, block_id: str) -> tuple[bytes, ReadReceipt]:
        with self._busy(), self._lock:
            if block_id not in self._blocks:
                raise UnknownBlockError(block_id)
            size = self._blocks[block_id].size
            where = self._where[block_id]
            m = self._metrics
            m.reads += 1
            if where is not None:
                self._evictors[where].touch(block_id)
                name = self._tiers[where].config.name
                latency = self._tiers[where].config.read_ms(size)
                m.hits += 1
                m.latency["read"] += latency
                return self._data[block_id], ReadReceipt(block_id, name, True, latency)

            payload = self._fetch(block_id)
            latency = self.backend_cost.read_ms(size)
            m.misses += 1
            m.latency["read"] += latency
            promoted = None
            dest = self._first_with_room(size, evicting=False)
            if dest is not None:
                self._place(block_id, size, dest, payload)
                promoted = self._tiers[dest].config.name
                m.latency["promote"] += self._tiers[dest].config.write_ms(size)
            return payload, ReadReceipt(block_id, BACKEND, False, latency, promoted)

    def promote_block(self, block_id: str, tier: str) -> PromotionRecord:
        """Best-effort move of a block into ``tier``; never evicts anything."""
        with self._lock:
            if block_id not in self._blocks:
                raise UnknownBlockError(block_id)
            idx = self._tier_index(tier)
            size = self._blocks[block_id].size
            where = self._where[block_id]
            source = BACKEND if where is None else self._tiers[where].config.name
            if where == idx:
                return PromotionRecord(block_id, source, tier, False, "already resident", 0.0)
            t = self._tiers[idx]
            if t.used + size > t.config.capacity:
                return PromotionRecord(block_id, source, tier, False, "insufficient space", 0.0)
            if where is None:
                payload = self._fetch(block_id)
            else:
                payload = self._evict(block_id)
            self._place(block_id, size, idx, payload)
            latency = self.move_cost(Move(block_id, source, tier, size))
            self._metrics.promotions += 1
            self._metrics.latency["promote"] += latency
            return PromotionRecord(block_id, source, tier, True, None, latency)

    def first_tier_with_room(self, size: int) -> str | None:
        """Top-most tier that can take ``size`` bytes without evicting."""
        with self._lock:
            idx = self._first_with_room(size, evicting=False)
            return None if idx is None else self._tiers[idx].config.name

    def flush(self) -> None:
        """Wait for outstanding background persists; re-raise their errors."""
        with self._lock:
            pending = list(self._pending.items())
            self._pending.clear()
        for _, fut in pending:
            fut.result()

    def close(self) -> None:
        self.flush()
        if self._pool is not None:
            self._pool.shutdown(wait=True)

    # -- internals --

    def _tier_index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UnknownTierError(name) from None

    @contextmanager
    def _busy(self):
        with self._inflight_lock:
            self._in_flight += 1
        try:
            yield
        finally:
            with self._inflight_lock:
                self._in_flight -= 1

    def _check_new(self, block: Block) -> None:
        if block.id in self._blocks:
            raise DuplicateBlockError(f"block {block.id!r} already written")
        if block.payload_ref in self._by_path:
            raise DuplicateBlockError(f"object path {block.payload_ref!r} already used")
        if block.size > max(t.config.write_limit for t in self._tiers):
            raise BlockTooLargeError(f"block {block.id!r} ({block.size} B) exceeds every tier")

    def _register(self, block: Block) -> None:
        self._blocks[block.id] = block
        self._by_path[block.payload_ref] = block.id
        self._where[block.id] = None

    def _persist(self, block: Block, payload: bytes) -> None:
        if self._pool is None:
            self.backend.persist(block.payload_ref, payload)
        else:
            self._pending[block.id] = self._pool.submit(self.backend.persist, block.payload_ref, payload)

    def _await_persist(self, block_id: str) -> None:
        fut = self._pending.pop(block_id, None)
        if fut is not None:
            fut.result()

    def _fetch(self, block_id: str) -> bytes:
        self._await_persist(block_id)
        return self.backend.fetch(self._blocks[block_id].payload_ref)

    def _place(self, block_id: str, size: int, idx: int, payload: bytes) -> None:
        t = self._tiers[idx]
        t.resident[block_id] = size
        t.used += size
        self._evictors[idx].add(block_id)
        self._where[block_id] = idx
        self._data[block_id] = payload

    def _evict(self, block_id: str) -> bytes:
        idx = self._where[block_id]
        t = self._tiers[idx]
        t.used -= t.resident.pop(block_id)
        self._evictors[idx].remove(block_id)
        self._where[block_id] = None
        return self._data.pop(block_id)

    def _move(self, block_id: str, src: int, dst: int | None, moves: list[Move]) -> None:
        size = self._tiers[src].resident[block_id]
        payload = self._evict(block_id)
        if dst is None:
            self._await_persist(block_id)
            moves.append(Move(block_id, self._tiers[src].config.name, BACKEND, size))
        else:
            self._place(block_id, size, dst, payload)
            moves.append(Move(block_id, self._tiers[src].config.name,
                              self._tiers[dst].config.name, size))

    def _has_room(self, idx: int, size: int, evicting: bool) -> bool:
        t = self._tiers[idx]
        limit = t.config.write_limit if evicting else t.config.capacity
        return t.used + size <= limit

    def _first_with_room(self, size: int, evicting: bool) -> int | None:
        for i in range(len(self._tiers)):
            if self._has_room(i, size, evicting):
                return i
        return None

    def _cascade_target(self, size: int) -> int:
        for i, t in enumerate(self._tiers):
            if t.config.write_limit >= size:
                return i
        raise BlockTooLargeError(size)

    def _direct_target(self, size: int, moves: list[Move]) -> int:
        idx = self._first_with_room(size, evicting=True)
        if idx is not None:
            return idx
        for i in reversed(range(len(self._tiers))):
            if self._tiers[i].config.write_limit >= size:
                idx = i
                break
        while not self._has_room(idx, size, evicting=True):
            victim = self._evictors[idx].victim()
            self._move(victim, idx, None, moves)
        return idx

    def _make_room(self, idx: int, size: int, moves: list[Move]) -> None:
        """Evict LRU victims from tier ``idx`` downward until ``size`` fits."""
        while not self._has_room(idx, size, evicting=True):
            victim = self._evictors[idx].victim()
            vsize = self._tiers[idx].resident[victim]
            below = next((j for j in range(idx + 1, len(self._tiers))
                          if self._tiers[j].config.write_limit >= vsize), None)
            if below is not None:
                self._make_room(below, vsize, moves)
            self._move(victim, idx, below, moves)


def create_store(tiers: list[TierConfig], allocator: AllocatorKind | str = AllocatorKind.DIRECT_WRITE,
                 evictor: str = "lru", backend: MountTable | None = None, **kwargs) -> TieredStore:
    return TieredStore(tiers, allocator, evictor, backend, **kwargs)
