"""Test package module."""
