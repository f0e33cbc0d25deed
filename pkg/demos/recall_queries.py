"""
Labelling streams and recalling them
====================================

Synthetic robot video streams go through the learning pipeline: frames are
sampled on a fixed interval, labelled by the deterministic extractor, and the
session record is indexed by time, location and label.
"""

from robocloud.backend import BackendDescriptor, MountTable
from robocloud.learning import LOCATIONS, ExtractorConfig, FramePolicy, process_stream, synthetic_stream
from robocloud.metastore import MetaStore, QueryPredicate
from robocloud.tiered import TieredStore, default_tiers

mounts = MountTable().mount("/videos", BackendDescriptor("videos", "in-memory-mock"))
store = TieredStore(default_tiers(), "DirectWrite", backend=mounts)
meta = MetaStore()

T0 = 1_700_000_000
for i in range(60):
    stream = synthetic_stream(f"s{i:02d}", f"robot{i % 3}", T0 + 600 * i, 6, LOCATIONS[i % len(LOCATIONS)],
                              seed=i)
    process_stream(stream, FramePolicy(interval=2.0), ExtractorConfig(labels_per_frame=1), store, meta)

print(f"{len(meta)} sessions indexed, {len(store)} payloads stored")

# %%
# What shows up most often in the kitchen?

for stat in meta.top_labels(5, location="kitchen"):
    print(f"  {stat.label:<12} {stat.count}")

# %%
# Recall: robot1's sessions in the first four hours that saw a dog or a cat.

pred = QueryPredicate(user_id="robot1", time_range=(T0, T0 + 4 * 3600), labels_any={"dog", "cat"})
for r in meta.query(pred):
    print(f"  {r.session_id} at {r.location:<12} {sorted(r.labels)}")

# %%
# Every record points at a payload the store can read back.

first = meta.records()[0]
payload, receipt = store.read_block(first.object_path)
print(f"{first.object_path}: {len(payload)} bytes from {receipt.source}")
