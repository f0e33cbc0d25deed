"""Workload generation, replay, capacity planning, reports and benchmarks."""
