"""
Sizing a deployment and mounting backends
=========================================

Capacity arithmetic for a small co-located cluster, then a unified
namespace spanning two storage backends.
"""

import tempfile

from robocloud.backend import BackendDescriptor, MountTable
from robocloud.harness.capacity import capacity_plan
from robocloud.tiered import GB, MB

plan = capacity_plan(machines=10, mem_per_machine=20 * GB, hdd_per_machine=200 * GB, avg_file=10 * MB,
                     per_image_latency=0.16, frame_interval=2.0, utilization=0.8,
                     queries_per_server=100, concurrency_factor=0.1)
for key, value in plan.to_dict().items():
    print(f"{key:>20}: {value:,}")

# %%
# Paths keep their names across backends; each prefix owns its subtree and
# overlapping prefixes are rejected.

with tempfile.TemporaryDirectory() as root:
    mounts = (MountTable()
              .mount("/archive", BackendDescriptor("cold", "local-directory", {"root": root}))
              .mount("/live", BackendDescriptor("hot", "in-memory-mock")))
    mounts.persist("/archive/2024/a.bin", b"archived")
    mounts.persist("/live/robot1/b.bin", b"fresh")
    for path in mounts.list("/"):
        descriptor, rel = mounts.resolve(path)
        print(f"{path:<22} -> {descriptor.name}:{rel}")
