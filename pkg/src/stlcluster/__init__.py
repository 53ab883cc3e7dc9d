"""Clustering-based recurrent control for Signal Temporal Logic tasks.

Solves per-instance trajectory optimizations, clusters the optimal trajectories,
routes new initial conditions to clusters with a permutation-invariant classifier
and drives each cluster with its own recurrent policy.
"""

__version__ = "0.1.0"
__author__ = "STL Cluster Control Team"
