"""Logging, I/O, configuration and seeding helpers."""
