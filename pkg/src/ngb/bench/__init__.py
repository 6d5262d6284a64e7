"""Benchmark harness: run the two cases, aggregate latencies, write reports."""
