"""Removal of isolated observations before change-point estimation.

A point whose two time neighbours share a cluster label different from its
own is treated as an anomaly.  All such points are dropped at once, the
remaining data are clustered again, and the procedure repeats until no
point is flagged.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .cluster import ClusterConfig, two_means
from .core import ChangePointReport, DataSequence, validate_sequence
from .dissim import DELTA0, DissimilaritySpec, dissimilarity_matrix
from .exceptions import BadParameter, TooShort

__all__ = ["FilterResult", "isolated_positions", "filter_isolated", "robust_single_changepoint_test"]

MIN_POINTS = 5


@dataclass
class FilterResult:
    """Outcome of :func:`filter_isolated`.

    ``kept`` and the removed sets hold 1-based original time indices.
    """

    kept: list[int]
    removed_per_round: list[list[int]] = field(default_factory=list)
    rounds: int = 0

    @property
    def removed(self) -> list[int]:
        return sorted(i for rnd in self.removed_per_round for i in rnd)

    def to_original(self, t: int) -> int:
        """Original time of the ``t``-th surviving observation (1-based)."""
        return self.kept[t - 1]


def isolated_positions(labels) -> list[int]:
    """0-based interior positions whose neighbours agree with each other but not with them."""
    lab = np.asarray(labels)
    if lab.size < 3:
        return []
    mid = lab[1:-1]
    flag = (lab[:-2] == lab[2:]) & (lab[:-2] != mid)
    return [int(i) + 1 for i in np.flatnonzero(flag)]


def filter_isolated(data, spec: DissimilaritySpec = DELTA0, config: ClusterConfig | None = None,
                    max_rounds: int = 5, seed: int = 0) -> FilterResult:
    """Iteratively cluster and drop isolated points.

    Stops when nothing is flagged, fewer than five points remain, or after
    ``max_rounds`` clustering rounds.
    """
    if not isinstance(data, DataSequence):
        data = validate_sequence(data)
    if data.n < MIN_POINTS:
        raise TooShort(f"outlier filtering needs n >= {MIN_POINTS}, got {data.n}")
    if max_rounds < 1:
        raise BadParameter("max_rounds must be at least 1")
    base = config or ClusterConfig()
    kept = np.arange(data.n)
    result = FilterResult(kept=[])
    while result.rounds < max_rounds and kept.size >= MIN_POINTS:
        rng_seed = int(np.random.SeedSequence([seed, result.rounds]).generate_state(1, dtype=np.uint64)[0])
        D = dissimilarity_matrix(data.take(kept), spec)
        labels = two_means(D, dataclasses.replace(base, rng_seed=rng_seed)).labeling.labels
        result.rounds += 1
        flagged = isolated_positions(labels)
        if not flagged:
            break
        result.removed_per_round.append([int(kept[i]) + 1 for i in flagged])
        kept = np.delete(kept, flagged)
    result.kept = [int(i) + 1 for i in kept]
    return result


def robust_single_changepoint_test(data, spec: DissimilaritySpec = DELTA0, statistic: str = "gini",
                                   alpha: float = 0.05, config: ClusterConfig | None = None,
                                   seed: int = 0, max_rounds: int = 5, **test_kw) -> ChangePointReport:
    """Filter isolated points, then run the single change-point test.

    A change-point between surviving observations at original times
    ``a < b`` is reported as ``a``.
    """
    from .singlecp import single_changepoint_test

    if not isinstance(data, DataSequence):
        data = validate_sequence(data)
    filt = filter_isolated(data, spec, config, max_rounds, seed)
    sub = data.take(np.asarray(filt.kept) - 1)
    report = single_changepoint_test(sub, spec, statistic, alpha, config, seed, **test_kw)
    for node in report.nodes:
        node.lo = filt.to_original(node.lo)
        node.hi = filt.to_original(node.hi)
        if node.split is not None:
            node.split = filt.to_original(node.split)
    report.changepoints = [filt.to_original(t) for t in report.changepoints]
    report.metadata["outlier_filter"] = {
        "kept": filt.kept,
        "removed_per_round": filt.removed_per_round,
        "rounds": filt.rounds,
        "max_rounds": max_rounds,
    }
    return report
