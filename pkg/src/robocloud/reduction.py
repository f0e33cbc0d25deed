"""Sampling-based data reduction and approximate aggregation.

Samplers can sit at three points of the pipeline: before learning (on stream
metadata), before memorization (on the labelled record), or online at query
time. Each admitted row carries the exact probability it was admitted with,
and aggregates are rescaled with the Horvitz-Thompson estimator

    estimate = sum_i y_i / p_i,    var = sum_i (1 - p_i) / p_i**2 * y_i**2

over the sampled rows that match the predicate, with a normal 95% interval.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .metastore import MetaStore, QueryPredicate, SessionRecord

Z95 = 1.96
POLICY_KINDS = ("meta-rate", "label-weighted", "uniform")


@dataclass(frozen=True)
class InclusionPolicy:
    kind: str = "uniform"
    base_rate: float = 1.0
    label_weights: Mapping[str, float] = field(default_factory=dict)
    p_min: float = 0.01
    seed: int = 0
    # meta-rate only: per-location factor applied to base_rate
    location_multipliers: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ConfigError(f"unknown policy kind {self.kind!r}")
        if not 0 < self.base_rate <= 1:
            raise ConfigError(f"base_rate must be in (0, 1], got {self.base_rate}")
        if not 0 < self.p_min <= 1:
            raise ConfigError(f"p_min must be in (0, 1], got {self.p_min}")
        for label, w in self.label_weights.items():
            if not 0 < w <= 1:
                raise ConfigError(f"weight for {label!r} must be in (0, 1], got {w}")
        for loc, m in self.location_multipliers.items():
            if not m > 0:
                raise ConfigError(f"multiplier for {loc!r} must be > 0, got {m}")

    def clamp(self, p: float) -> float:
        return min(1.0, max(self.p_min, p))


@dataclass(frozen=True)
class SampledRow:
    record: SessionRecord
    inclusion_probability: float


@dataclass(frozen=True)
class ApproxAnswer:
    estimate: float
    standard_error: float
    ci95: tuple[float, float]
    sample_size: int
    method: str = "horvitz-thompson"

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "standard_error": self.standard_error,
                "ci95": list(self.ci95), "sample_size": self.sample_size, "method": self.method}


def _as_rng(seed_or_rng):
    if hasattr(seed_or_rng, "random"):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def _keyed_rng(seed: int, key) -> np.random.Generator:
    """Generator determined by ``seed`` and a JSON-able ``key`` only."""
    digest = hashlib.sha256(json.dumps(key, sort_keys=True, default=str).encode()).digest()
    return np.random.default_rng([seed, int.from_bytes(digest[:8], "big")])


def pre_learning_probability(meta: Mapping, policy: InclusionPolicy) -> float:
    if policy.kind not in ("meta-rate", "uniform"):
        raise ConfigError(f"pre-learning sampling needs a meta-rate or uniform policy, got {policy.kind!r}")
    p = policy.base_rate
    if policy.kind == "meta-rate":
        p *= policy.location_multipliers.get(meta.get("location"), 1.0)
    return policy.clamp(p)


def pre_learning_decide(meta: Mapping, policy: InclusionPolicy, rng=None) -> tuple[bool, float]:
    """Admit a raw tuple based on its metadata (timestamp, location).

    Without ``rng`` the draw is keyed on ``policy.seed`` and the metadata, so
    the same tuple always gets the same decision.
    """
    p = pre_learning_probability(meta, policy)
    if rng is None:
        rng = _keyed_rng(policy.seed, dict(meta))
    return bool(rng.random() < p), p


def pre_memorization_probability(record: SessionRecord, policy: InclusionPolicy) -> float:
    if policy.kind != "label-weighted":
        raise ConfigError(f"pre-memorization sampling needs a label-weighted policy, got {policy.kind!r}")
    if not record.labels:
        return policy.clamp(policy.base_rate)
    return policy.clamp(max(policy.label_weights.get(label, policy.base_rate) for label in record.labels))


def pre_memorization_decide(record: SessionRecord, policy: InclusionPolicy, rng=None) -> tuple[bool, float]:
    p = pre_memorization_probability(record, policy)
    if rng is None:
        rng = _keyed_rng(policy.seed, [record.session_id, record.timestamp])
    return bool(rng.random() < p), p


class PreLearningSampler:
    """Callable sampler drawing from one seeded stream."""

    def __init__(self, policy: InclusionPolicy):
        pre_learning_probability({}, policy)  # validates kind
        self.policy = policy
        self.rng = np.random.default_rng(policy.seed)
        self.rejected = 0

    def __call__(self, meta: Mapping) -> tuple[bool, float]:
        include, p = pre_learning_decide(meta, self.policy, self.rng)
        self.rejected += not include
        return include, p


class PreMemorizationSampler:
    def __init__(self, policy: InclusionPolicy):
        if policy.kind != "label-weighted":
            raise ConfigError("pre-memorization sampling needs a label-weighted policy")
        self.policy = policy
        self.rng = np.random.default_rng(policy.seed)
        self.rejected = 0
        self.admitted: list[SampledRow] = []

    def __call__(self, record: SessionRecord) -> tuple[bool, float]:
        include, p = pre_memorization_decide(record, self.policy, self.rng)
        if include:
            self.admitted.append(SampledRow(record, p))
        else:
            self.rejected += 1
        return include, p


def online_sample(rows: Sequence[SessionRecord], q: float, seed=0) -> list[SampledRow]:
    """Bernoulli(q) sample of ``rows``.

    ``seed`` may also be any object with a numpy-style ``random(n)`` method.
    """
    if not 0 < q <= 1:
        raise ConfigError(f"sampling rate must be in (0, 1], got {q}")
    if not rows:
        return []
    u = np.asarray(_as_rng(seed).random(len(rows)))
    return [SampledRow(r, q) for r, keep in zip(rows, u < q) if keep]


def _check_probabilities(sampled: Iterable[SampledRow]) -> None:
    for row in sampled:
        p = row.inclusion_probability
        if not (0 < p <= 1):
            raise ValueError(f"inclusion probability must be in (0, 1], got {p}")


def horvitz_thompson(values: Sequence[float], probs: Sequence[float], sample_size: int) -> ApproxAnswer:
    estimate = math.fsum(y / p for y, p in zip(values, probs))
    variance = math.fsum((1 - p) / (p * p) * y * y for y, p in zip(values, probs))
    se = math.sqrt(max(variance, 0.0))
    low = max(0.0, estimate - Z95 * se)
    return ApproxAnswer(estimate, se, (low, estimate + Z95 * se), sample_size)


def approx_count(sampled: Sequence[SampledRow], predicate: QueryPredicate | None) -> ApproxAnswer:
    _check_probabilities(sampled)
    hits = [s for s in sampled if predicate is None or predicate.matches(s.record)]
    return horvitz_thompson([1.0] * len(hits), [s.inclusion_probability for s in hits], len(sampled))


def approx_sum(sampled: Sequence[SampledRow], predicate: QueryPredicate | None,
               value: Callable[[SessionRecord], float] = lambda r: r.duration) -> ApproxAnswer:
    """Estimated total of ``value`` (default: duration) over matching rows."""
    _check_probabilities(sampled)
    hits = [s for s in sampled if predicate is None or predicate.matches(s.record)]
    vals = [float(value(s.record)) for s in hits]
    if any(v < 0 for v in vals):
        raise ValueError("approx_sum needs non-negative values")
    return horvitz_thompson(vals, [s.inclusion_probability for s in hits], len(sampled))


def approx_query(metastore: MetaStore, predicate: QueryPredicate, q: float, seed=0,
                 aggregate: str = "count") -> ApproxAnswer:
    """Sample the stored rows at rate ``q`` and answer the aggregate rescaled."""
    sampled = online_sample(metastore.records(), q, seed)
    if aggregate == "count":
        return approx_count(sampled, predicate)
    if aggregate == "sum":
        return approx_sum(sampled, predicate)
    raise ValueError(f"unsupported aggregate {aggregate!r}")
