"""
Writing into a tiered store
===========================

A store with three small tiers above an in-memory backend. We fill it, then
compare where a new block lands and what it costs under the two allocators.
"""

from robocloud.backend import BackendDescriptor, MountTable
from robocloud.harness.bench import residency, saturation_script
from robocloud.tiered import MB, Block, TieredStore, default_tiers

mounts = MountTable().mount("/videos", BackendDescriptor("videos", "in-memory-mock"))

# %%
# Each tier holds exactly one 10 MB block. Three writes fill the store; the
# fourth forces the allocator to make room.

for allocator in ("DefaultCascade", "DirectWrite"):
    store = TieredStore(default_tiers(10 * MB, 10 * MB, 10 * MB), allocator, backend=mounts)
    for i in range(4):
        receipt = store.write_block(Block(f"{allocator}-{i}", 10 * MB, f"/videos/{allocator}/{i}"), b"")
    print(f"{allocator:>15}: landed in {receipt.placed_tier}, {len(receipt.moves)} moves, "
          f"{receipt.modeled_latency:.1f} ms, residency {residency(store)}")

# %%
# The cascade pushes a victim down from every tier so the new block can sit
# in memory. DirectWrite demotes a single victim from the bottom tier.
#
# The same contrast over 1,000 random-size writes:

sat = saturation_script(n=1000, seed=42)
for kind, mean in sat.mean_latency.items():
    print(f"{kind:>15}: mean write {mean:.1f} ms, {sat.total_moves[kind]} moves")
print(f"cascade / direct = {sat.ratio:.3f}")

# %%
# Reads that miss every tier are served by the backend and promoted into the
# first tier with free space, without evicting anything.

store = TieredStore(default_tiers(10 * MB, 10 * MB, 10 * MB)[:1], "DirectWrite", backend=mounts)
store.write_block(Block("old", 10 * MB, "/videos/old"), b"")
store.write_block(Block("new", 10 * MB, "/videos/new"), b"")
_, hit = store.read_block("new")
_, miss = store.read_block("old")
print(f"memory hit {hit.modeled_latency:.2f} ms, backend miss {miss.modeled_latency:.1f} ms, "
      f"ratio {miss.modeled_latency / hit.modeled_latency:.1f}")
