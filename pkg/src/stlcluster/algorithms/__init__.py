"""Numerical core: differentiation, STL semantics, optimization and learning."""
