"""
Approximate answers from samples
================================

Counting matching sessions from a Bernoulli sample, rescaled by inverse
inclusion probabilities. Smaller samples give wider intervals.
"""

import numpy as np

from robocloud.metastore import MetaStore, QueryPredicate, SessionRecord
from robocloud.reduction import InclusionPolicy, PreMemorizationSampler, approx_count, approx_query

meta = MetaStore()
rng = np.random.default_rng(0)
locations = ["kitchen", "bedroom", "hallway", "living room"]
for i in range(10_000):
    meta.put_record(SessionRecord(f"s{i}", "u", float(i), float(rng.integers(5, 60)),
                                  locations[int(rng.choice(4, p=[0.2, 0.3, 0.2, 0.3]))],
                                  frozenset(), f"/videos/s{i}"))

kitchen = QueryPredicate(location="kitchen")
print(f"exact count: {meta.count(kitchen)}")

for q in (0.05, 0.1, 0.3, 1.0):
    ans = approx_query(meta, kitchen, q, seed=7)
    lo, hi = ans.ci95
    print(f"q={q:<4}: {ans.estimate:7.0f}  95% CI [{lo:7.0f}, {hi:7.0f}]  sample {ans.sample_size}")

# %%
# Sums work the same way; here total recorded seconds in the kitchen.

ans = approx_query(meta, kitchen, 0.2, seed=7, aggregate="sum")
exact = sum(r.duration for r in meta.query(kitchen))
print(f"duration sum: estimate {ans.estimate:.0f}, exact {exact:.0f}")

# %%
# Samplers can also run before records are stored. Each admitted row keeps
# its own inclusion probability, so counts over the reduced store stay
# unbiased even when labels are kept at different rates.

policy = InclusionPolicy("label-weighted", base_rate=0.2, label_weights={"dog": 1.0}, seed=3)
sampler = PreMemorizationSampler(policy)
rows = [SessionRecord(f"r{i}", "u", float(i), 1.0, "kitchen",
                      frozenset({"dog"} if i % 10 == 0 else {"chair"}), f"/videos/r{i}") for i in range(5000)]
for r in rows:
    sampler(r)
chairs = QueryPredicate(labels_any={"chair"})
print(f"kept {len(sampler.admitted)} of {len(rows)}; chair count estimate "
      f"{approx_count(sampler.admitted, chairs).estimate:.0f} vs exact {sum(chairs.matches(r) for r in rows)}")
