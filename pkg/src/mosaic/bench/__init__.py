"""Benchmark harness: synthetic problems, baselines, run logs and rank aggregation."""
