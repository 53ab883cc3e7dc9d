"""Command-line interface for the stlcluster pipeline."""
