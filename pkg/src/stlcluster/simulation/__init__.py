"""Benchmark environment and end-to-end pipeline orchestration."""
