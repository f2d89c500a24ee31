"""Domain types shared by every module.

Time indices follow one convention throughout the package: a change-point
``t`` (``1 <= t <= n - 1``) means the split falls after the ``t``-th
observation, so the first segment is ``X_1 .. X_t``.  Segments are reported
as 1-based inclusive ``[lo, hi]`` pairs.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from .exceptions import DimensionMismatch, EmptyCluster, HdcpdError, NonFinite, TooFewRows

__all__ = [
    "DataSequence",
    "DissimilarityMatrix",
    "Labeling",
    "SegmentNode",
    "ChangePointReport",
    "validate_sequence",
    "REPORT_SCHEMA",
]

REPORT_SCHEMA = "hdcpd-report/1"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DataSequence:
    """Time-ordered ``n x d`` matrix of finite reals (row ``i`` is ``X_{i+1}``)."""

    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def subsequence(self, lo: int, hi: int) -> "DataSequence":
        """Rows ``lo .. hi`` (1-based, inclusive)."""
        return DataSequence(_frozen(self.values[lo - 1 : hi]))

    def take(self, rows: Sequence[int]) -> "DataSequence":
        """Rows at 0-based positions ``rows``, in the given order."""
        return DataSequence(_frozen(self.values[np.asarray(rows, dtype=int)]))


def validate_sequence(raw) -> DataSequence:
    """Check a raw matrix and wrap it as a :class:`DataSequence`.

    A 1-D input is read as ``n`` univariate observations.

    Raises
    ------
    TooFewRows
        If fewer than two observations are given.
    NonFinite
        On the first NaN or infinite entry (0-based row and column).
    """
    a = np.asarray(raw, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got {a.ndim} dimensions")
    if a.shape[0] < 2:
        raise TooFewRows(f"need at least 2 observations, got {a.shape[0]}")
    if a.shape[1] < 1:
        raise DimensionMismatch("observations must have at least one coordinate")
    bad = ~np.isfinite(a)
    if bad.any():
        row, col = map(int, np.argwhere(bad)[0])
        raise NonFinite(row, col)
    return DataSequence(_frozen(a))


@dataclass(frozen=True)
class DissimilarityMatrix:
    """Symmetric, nonnegative ``n x n`` matrix with zero diagonal."""

    entries: np.ndarray

    def __post_init__(self):
        e = self.entries
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise DimensionMismatch("dissimilarity matrix must be square")
        if not np.all(np.isfinite(e)):
            raise HdcpdError("dissimilarity matrix has non-finite entries")
        if (e < 0).any():
            raise HdcpdError("dissimilarity matrix has negative entries")
        if not np.array_equal(e, e.T):
            raise HdcpdError("dissimilarity matrix is not symmetric")
        if np.any(np.diag(e) != 0):
            raise HdcpdError("dissimilarity matrix has a nonzero diagonal")

    @classmethod
    def from_array(cls, a) -> "DissimilarityMatrix":
        return cls(_frozen(a))

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class Labeling:
    """Binary cluster labels in time order, with cluster counts.

    ``n1`` counts label 0 and ``n2`` counts label 1.
    """

    labels: np.ndarray
    n1: int
    n2: int

    @classmethod
    def from_labels(cls, labels) -> "Labeling":
        a = np.asarray(labels)
        if a.ndim != 1:
            raise DimensionMismatch("labels must be one-dimensional")
        if not np.isin(a, (0, 1)).all():
            raise HdcpdError("labels must be 0 or 1")
        a = a.astype(np.int8)
        a.setflags(write=False)
        n2 = int(a.sum())
        return cls(a, len(a) - n2, n2)

    @classmethod
    def from_string(cls, s: str) -> "Labeling":
        """Parse ``"0011"`` (whitespace ignored)."""
        return cls.from_labels([int(c) for c in s if not c.isspace()])

    @property
    def n(self) -> int:
        return len(self.labels)

    def swapped(self) -> "Labeling":
        return Labeling.from_labels(1 - self.labels)

    def canonical(self) -> "Labeling":
        """Relabel so that the first observation carries label 0."""
        return self.swapped() if self.n and self.labels[0] == 1 else self

    def members(self, label: int) -> np.ndarray:
        idx = np.flatnonzero(self.labels == label)
        if idx.size == 0:
            raise EmptyCluster(f"cluster {label} is empty")
        return idx

    def __str__(self) -> str:
        return "".join(str(int(v)) for v in self.labels)


@dataclass
class SegmentNode:
    """One test performed on a segment ``[lo, hi]`` of the original sequence."""

    lo: int
    hi: int
    statistic: float | None = None
    p_value: float | None = None
    threshold: float | None = None
    gamma: float | None = None
    coin: float | None = None
    reject: bool = False
    split: int | None = None
    window_end: int | None = None
    n1: int | None = None
    n2: int | None = None
    depth: int = 0
    note: str = ""


@dataclass
class ChangePointReport:
    changepoints: list[int]
    nodes: list[SegmentNode]
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        cps = list(self.changepoints)
        if any(b <= a for a, b in zip(cps, cps[1:])):
            raise HdcpdError("change-points must be strictly increasing")

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": REPORT_SCHEMA,
            "changepoints": [int(c) for c in self.changepoints],
            "nodes": [asdict(nd) for nd in self.nodes],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> "ChangePointReport":
        schema = payload.get("schema")
        if schema != REPORT_SCHEMA:
            raise HdcpdError(f"unsupported report schema {schema!r}")
        return cls(
            changepoints=list(payload["changepoints"]),
            nodes=[SegmentNode(**nd) for nd in payload["nodes"]],
            metadata=dict(payload.get("metadata", {})),
        )

    def check_min_gap(self, min_gap: int, n: int) -> bool:
        """True if change-points and the sequence ends are ``min_gap`` apart."""
        edges = [0, *self.changepoints, n]
        return all(b - a >= min_gap for a, b in zip(edges, edges[1:]))
