"""Dissimilarity measures between observations.

Three base distances are supported:

* ``euclidean``: ``||x - y||``.
* ``rho``: ``h(mean_q psi((x_q - y_q)^2))`` over the ``d`` coordinates.
* ``rho_block``: ``h(mean_i psi(||x_(i) - y_(i)||^2))`` over ``b`` coordinate
  blocks.

With ``leave_out_averaging`` the base distance ``rho`` is turned into the
data-driven dissimilarity

    delta(x_i, x_j) = 1/(n-2) * sum_{k != i, j} |rho(x_i, x_k) - rho(x_j, x_k)|,

which depends on the whole sample.  ``euclidean`` with averaging is the
MADD-type measure exposed as :data:`DELTA0`; ``rho`` with ``h = identity`` and
``psi(t) = 1 - exp(-sqrt(t))`` is :data:`DELTA1`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .core import DataSequence, DissimilarityMatrix
from .exceptions import (
    BadParameter,
    DimensionMismatch,
    InvalidPartition,
    LengthMismatch,
    TooFewPoints,
    UnsupportedBlockSize,
)

__all__ = [
    "TransformPair",
    "BlockPartition",
    "DissimilaritySpec",
    "EUCLIDEAN",
    "DELTA0",
    "DELTA1",
    "IDENTITY_PAIR",
    "EXP_DECAY_PAIR",
    "preset",
    "base_distance",
    "base_distance_matrix",
    "leave_out_average",
    "dissimilarity_matrix",
    "distance_correlation",
    "distance_correlation_matrix",
    "form_blocks",
    "pair_coordinates",
    "consecutive_blocks",
    "EXACT_MATCHING_LIMIT",
]

_PSI = ("identity", "exp_decay", "power")
_H = ("identity", "root")

# Elements processed per vectorised chunk in the pairwise kernels.
_CHUNK_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class TransformPair:
    """The coordinate transform ``psi`` and the outer transform ``h``.

    ``psi`` is one of ``identity``, ``exp_decay`` (``1 - exp(-sqrt(t))``) or
    ``power`` (``t ** psi_exponent``); ``h`` is ``identity`` or ``root``
    (``t ** h_exponent`` with ``0 < h_exponent <= 1``).
    """

    psi: str = "identity"
    h: str = "identity"
    psi_exponent: float = 1.0
    h_exponent: float = 1.0

    def __post_init__(self):
        if self.psi not in _PSI:
            raise BadParameter(f"unknown psi {self.psi!r}; choose from {_PSI}")
        if self.h not in _H:
            raise BadParameter(f"unknown h {self.h!r}; choose from {_H}")
        if self.psi == "power" and not self.psi_exponent > 0:
            raise BadParameter("psi power exponent must be positive")
        if self.h == "root" and not 0 < self.h_exponent <= 1:
            raise BadParameter("h root exponent must lie in (0, 1]")

    @classmethod
    def lp(cls, p: float) -> "TransformPair":
        """Pair giving the scaled ``l_p`` distance ``(mean |x_q - y_q|^p)^(1/p)``."""
        return cls(psi="power", h="root", psi_exponent=p / 2.0, h_exponent=1.0 / p)

    def apply_psi(self, t):
        t = np.asarray(t, dtype=float)
        if self.psi == "identity":
            return t
        if self.psi == "exp_decay":
            return -np.expm1(-np.sqrt(t))
        return t**self.psi_exponent

    def apply_h(self, t):
        t = np.asarray(t, dtype=float)
        if self.h == "identity":
            return t
        return t**self.h_exponent

    def describe(self) -> str:
        psi = self.psi if self.psi != "power" else f"power({self.psi_exponent:g})"
        h = self.h if self.h != "root" else f"root({self.h_exponent:g})"
        return f"h={h},psi={psi}"


IDENTITY_PAIR = TransformPair()
EXP_DECAY_PAIR = TransformPair(psi="exp_decay", h="identity")


@dataclass(frozen=True)
class BlockPartition:
    """Disjoint coordinate groups (0-based indices) covering ``0 .. d-1``."""

    blocks: tuple[tuple[int, ...], ...]
    d: int
    matching: str = "given"
    total_weight: float | None = None

    def __post_init__(self):
        seen = sorted(i for blk in self.blocks for i in blk)
        if any(len(blk) == 0 for blk in self.blocks):
            raise InvalidPartition("blocks must be nonempty")
        if seen != list(range(self.d)):
            raise InvalidPartition("blocks must partition the coordinates 0..d-1")

    @classmethod
    def from_blocks(cls, blocks: Sequence[Sequence[int]], d: int | None = None, **kw) -> "BlockPartition":
        blocks = tuple(tuple(sorted(int(i) for i in blk)) for blk in blocks)
        blocks = tuple(sorted(blocks))
        if d is None:
            d = sum(len(b) for b in blocks)
        return cls(blocks, d, **kw)

    @property
    def b(self) -> int:
        return len(self.blocks)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(blk) for blk in self.blocks)

    def _order(self) -> tuple[np.ndarray, np.ndarray]:
        order = np.fromiter((i for blk in self.blocks for i in blk), dtype=int, count=self.d)
        starts = np.concatenate([[0], np.cumsum(self.sizes)[:-1]]).astype(int)
        return order, starts

    def to_dict(self) -> dict:
        return {"blocks": [list(b) for b in self.blocks], "d": self.d,
                "matching": self.matching, "total_weight": self.total_weight}


@dataclass(frozen=True)
class DissimilaritySpec:
    kind: str = "euclidean"
    transform: TransformPair = field(default_factory=TransformPair)
    leave_out_averaging: bool = True
    partition: BlockPartition | None = None
    name: str | None = None

    def __post_init__(self):
        if self.kind not in ("euclidean", "rho", "rho_block"):
            raise BadParameter(f"unknown dissimilarity kind {self.kind!r}")
        if self.kind == "rho_block" and self.partition is None:
            raise InvalidPartition("rho_block requires a BlockPartition")

    def with_partition(self, partition: BlockPartition) -> "DissimilaritySpec":
        return DissimilaritySpec("rho_block", self.transform, self.leave_out_averaging,
                                 partition, self.name)

    def describe(self) -> str:
        if self.name:
            return self.name
        base = self.kind if self.kind == "euclidean" else f"{self.kind}({self.transform.describe()})"
        return base + ("+loo" if self.leave_out_averaging else "")

    def to_dict(self) -> dict:
        out = {
            "name": self.describe(),
            "kind": self.kind,
            "psi": self.transform.psi,
            "h": self.transform.h,
            "psi_exponent": self.transform.psi_exponent,
            "h_exponent": self.transform.h_exponent,
            "leave_out_averaging": self.leave_out_averaging,
        }
        if self.partition is not None:
            out["partition"] = {"b": self.partition.b, "matching": self.partition.matching,
                                "total_weight": self.partition.total_weight}
        return out


EUCLIDEAN = DissimilaritySpec("euclidean", leave_out_averaging=False, name="euclidean")
DELTA0 = DissimilaritySpec("euclidean", leave_out_averaging=True, name="delta0")
DELTA1 = DissimilaritySpec("rho", EXP_DECAY_PAIR, leave_out_averaging=True, name="delta1")


def preset(name: str, partition: BlockPartition | None = None) -> DissimilaritySpec:
    """Look up ``euclidean``, ``delta0``, ``delta1`` or ``delta1-block``."""
    if name == "euclidean":
        return EUCLIDEAN
    if name == "delta0":
        return DELTA0
    if name == "delta1":
        return DELTA1
    if name == "delta1-block":
        if partition is None:
            raise InvalidPartition("delta1-block needs a block partition (see form_blocks)")
        return DissimilaritySpec("rho_block", EXP_DECAY_PAIR, True, partition, "delta1-block")
    raise BadParameter(f"unknown dissimilarity preset {name!r}")


def base_distance(x, y, spec: DissimilaritySpec) -> float:
    """Base distance between two observations (no leave-out averaging)."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise DimensionMismatch(f"vectors have lengths {x.size} and {y.size}")
    m = base_distance_matrix(np.vstack([x, y]), spec)
    return float(m[0, 1])


def _check_dim(X: np.ndarray, spec: DissimilaritySpec) -> None:
    if spec.kind == "rho_block" and spec.partition.d != X.shape[1]:
        raise DimensionMismatch(
            f"partition covers {spec.partition.d} coordinates, data has {X.shape[1]}")


def _row_chunks(n: int, per_row: int):
    step = max(1, _CHUNK_ELEMENTS // max(per_row, 1))
    for lo in range(0, n, step):
        yield lo, min(n, lo + step)


def base_distance_matrix(X, spec: DissimilaritySpec) -> np.ndarray:
    """Pairwise base distances of the rows of ``X`` as an ``n x n`` array."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    _check_dim(X, spec)
    n, d = X.shape
    if spec.kind == "euclidean":
        out = cdist(X, X)
    else:
        tr = spec.transform
        if spec.kind == "rho_block":
            order, starts = spec.partition._order()
            Xo = X[:, order]
        out = np.empty((n, n))
        for lo, hi in _row_chunks(n, n * d):
            sq = (X[lo:hi, None, :] - X[None, :, :]) ** 2 if spec.kind == "rho" else \
                (Xo[lo:hi, None, :] - Xo[None, :, :]) ** 2
            if spec.kind == "rho_block":
                sq = np.add.reduceat(sq, starts, axis=2)
            out[lo:hi] = tr.apply_h(tr.apply_psi(sq).mean(axis=2))
    # mirror the upper triangle so the result is symmetric bit for bit
    out = np.triu(out, 1)
    return out + out.T


def leave_out_average(P: np.ndarray) -> np.ndarray:
    """Mean absolute difference of distances to the other ``n - 2`` points."""
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    if n < 3:
        raise TooFewPoints(f"leave-out averaging needs n >= 3, got {n}")
    out = np.empty((n, n))
    cols = np.arange(n)
    for lo, hi in _row_chunks(n, n * n):
        rows = np.arange(lo, hi)
        diff = np.abs(P[lo:hi, None, :] - P[None, :, :])  # [i, j, k]
        diff[rows - lo, :, rows] = 0.0  # k == i
        diff[:, cols, cols] = 0.0  # k == j
        out[lo:hi] = diff.sum(axis=2) / (n - 2)
    np.fill_diagonal(out, 0.0)
    out = np.triu(out, 1)
    return out + out.T


def dissimilarity_matrix(data: DataSequence, spec: DissimilaritySpec = DELTA0) -> DissimilarityMatrix:
    """Full dissimilarity matrix for ``data`` under ``spec``."""
    X = data.values if isinstance(data, DataSequence) else np.asarray(data, dtype=float)
    if spec.leave_out_averaging and X.shape[0] < 3:
        raise TooFewPoints(f"leave-out averaging needs n >= 3, got {X.shape[0]}")
    P = base_distance_matrix(X, spec)
    if spec.leave_out_averaging:
        P = leave_out_average(P)
    return DissimilarityMatrix.from_array(P)


# ---------------------------------------------------------------------------
# distance correlation and block formation


def _double_centered(a: np.ndarray) -> np.ndarray:
    """Double-centred pairwise distance matrices of each column of ``a``.

    ``a`` is ``n x m``; the result is ``m x n x n``.
    """
    dist = np.abs(a.T[:, :, None] - a.T[:, None, :])
    return (dist - dist.mean(axis=1, keepdims=True) - dist.mean(axis=2, keepdims=True)
            + dist.mean(axis=(1, 2), keepdims=True))


def distance_correlation(u, v) -> float:
    """Sample distance correlation of two univariate series.

    Returns 0 when either series has zero distance variance (constant series).
    """
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.size != v.size:
        raise LengthMismatch(f"series have lengths {u.size} and {v.size}")
    if u.size < 2:
        raise TooFewPoints("distance correlation needs at least 2 observations")
    A, B = _double_centered(np.column_stack([u, v]))
    dcov2 = np.mean(A * B)
    var_u, var_v = np.mean(A * A), np.mean(B * B)
    if var_u <= 0 or var_v <= 0:
        return 0.0
    return float(np.sqrt(max(dcov2, 0.0) / np.sqrt(var_u * var_v)))


def distance_correlation_matrix(data) -> np.ndarray:
    """``d x d`` matrix of pairwise distance correlations between coordinates."""
    X = data.values if isinstance(data, DataSequence) else np.asarray(data, dtype=float)
    n, d = X.shape
    gram = np.zeros((d, d))
    step = max(1, _CHUNK_ELEMENTS // (n * n))
    flat = [(lo, _double_centered(X[:, lo:lo + step]).reshape(-1, n * n))
            for lo in range(0, d, step)] if d * n * n <= 8 * _CHUNK_ELEMENTS else None
    if flat is not None:
        for lo, A in flat:
            for lo2, B in flat:
                gram[lo:lo + len(A), lo2:lo2 + len(B)] = A @ B.T
    else:
        for lo in range(0, d, step):
            A = _double_centered(X[:, lo:lo + step]).reshape(-1, n * n)
            for lo2 in range(lo, d, step):
                B = A if lo2 == lo else _double_centered(X[:, lo2:lo2 + step]).reshape(-1, n * n)
                g = A @ B.T
                gram[lo:lo + len(A), lo2:lo2 + len(B)] = g
                gram[lo2:lo2 + len(B), lo:lo + len(A)] = g.T
    gram /= n * n
    var = np.diag(gram).copy()
    denom = np.sqrt(np.outer(var, var))
    with np.errstate(invalid="ignore", divide="ignore"):
        r2 = np.where(denom > 0, gram / np.where(denom > 0, denom, 1.0), 0.0)
    out = np.sqrt(np.clip(r2, 0.0, None))
    out = np.triu(out, 1)
    out = out + out.T
    np.fill_diagonal(out, np.where(var > 0, 1.0, 0.0))
    return out


EXACT_MATCHING_LIMIT = 16


def _exact_pairing(W: np.ndarray) -> tuple[float, list[tuple[int, ...]]]:
    """Maximum-weight pairing by dynamic programming over coordinate subsets.

    With an odd number of items exactly one is left as a singleton.
    """
    d = len(W)
    w = W.tolist()

    @lru_cache(maxsize=None)
    def best(mask: int, single: bool):
        if mask == 0:
            return 0.0, ()
        if bin(mask).count("1") % 2 == 1 and not single:
            return float("-inf"), ()
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        top_val, top_pairs = float("-inf"), ()
        if single:
            val, pairs = best(rest, False)
            if val > top_val:
                top_val, top_pairs = val, ((i,),) + pairs
        j_mask = rest
        while j_mask:
            j = (j_mask & -j_mask).bit_length() - 1
            j_mask &= j_mask - 1
            val, pairs = best(rest & ~(1 << j), single)
            val += w[i][j]
            if val > top_val:
                top_val, top_pairs = val, ((i, j),) + pairs
        return top_val, top_pairs

    total, pairs = best((1 << d) - 1, d % 2 == 1)
    best.cache_clear()
    return total, list(pairs)


def _greedy_pairing(W: np.ndarray) -> tuple[float, list[tuple[int, ...]]]:
    d = len(W)
    iu, ju = np.triu_indices(d, 1)
    # heaviest edge first; ties by lexicographic (i, j)
    order = np.lexsort((ju, iu, -W[iu, ju]))
    free = np.ones(d, dtype=bool)
    pairs: list[tuple[int, ...]] = []
    total = 0.0
    for e in order:
        i, j = int(iu[e]), int(ju[e])
        if free[i] and free[j]:
            free[i] = free[j] = False
            pairs.append((i, j))
            total += float(W[i, j])
    pairs.extend((int(i),) for i in np.flatnonzero(free))
    return total, pairs


def pair_coordinates(W, exact_limit: int = EXACT_MATCHING_LIMIT) -> tuple[float, list[tuple[int, ...]], str]:
    """Pair items to maximise the summed weight ``W[i, j]`` within pairs.

    Exact for up to ``exact_limit`` items, greedy (heaviest available edge
    first) beyond that.  Returns ``(total, blocks, method)``.
    """
    W = np.asarray(W, dtype=float)
    if len(W) <= exact_limit:
        total, pairs = _exact_pairing(W)
        return total, pairs, "exact"
    total, pairs = _greedy_pairing(W)
    return total, pairs, "greedy"


def form_blocks(data, block_size: int = 2, exact_limit: int = EXACT_MATCHING_LIMIT) -> BlockPartition:
    """Pair coordinates so that within-pair distance correlation is maximal."""
    if block_size != 2:
        raise UnsupportedBlockSize(f"only blocks of size 2 are supported, got {block_size}")
    X = data.values if isinstance(data, DataSequence) else np.asarray(data, dtype=float)
    d = X.shape[1]
    if d < 2:
        raise DimensionMismatch("block formation needs d >= 2")
    W = distance_correlation_matrix(X)
    total, pairs, method = pair_coordinates(W, exact_limit)
    return BlockPartition.from_blocks(pairs, d, matching=method, total_weight=total)


def consecutive_blocks(d: int, block_size: int = 2) -> BlockPartition:
    """Blocks ``(0, 1), (2, 3), ...``; a short last block if ``d`` is not a multiple."""
    blocks = [tuple(range(i, min(d, i + block_size))) for i in range(0, d, block_size)]
    return BlockPartition.from_blocks(blocks, d, matching="consecutive")
