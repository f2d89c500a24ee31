"""Clustering-based change-point detection for high-dimensional sequences.

Observations are clustered into two groups with a dissimilarity that suits
high dimension and small sample size, and the resulting label sequence is
tested for a change with distribution-free permutation statistics.
"""

from __future__ import annotations

__version__ = "0.1.0"
