"""Two-means clustering on a precomputed dissimilarity matrix.

The objective is the within-cluster sum of squared dissimilarities,

    lambda = sum_j 1/(2|C_j|) * sum_{i, i' in C_j} delta(i, i')^2,

which for Euclidean ``delta`` is the usual k-means criterion.  Points are
reassigned with the surrogate squared distance

    d0(i, C) = mean_{k in C} delta(i, k)^2 - 1/(2|C|^2) * sum_{k, l in C} delta(k, l)^2,

which needs only the matrix and not any coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DissimilarityMatrix, Labeling
from .exceptions import BadParameter, DegenerateInput, EmptyCluster

__all__ = [
    "ClusterConfig",
    "ClusterResult",
    "objective_lambda",
    "point_to_cluster",
    "two_means",
    "initial_labelings",
]


@dataclass(frozen=True)
class ClusterConfig:
    """Settings for :func:`two_means`.

    Parameters
    ----------
    max_iterations
        Cap on batch reassignment sweeps per initialisation.
    restarts
        Number of random balanced bipartitions used as starting points.
    include_split_inits
        Also start from every temporal split ``{1..t} | {t+1..n}``.
    rng_seed
        Seed for the random starting points.
    """

    max_iterations: int = 100
    restarts: int = 20
    include_split_inits: bool = True
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise BadParameter("max_iterations must be at least 1")
        if self.restarts < 0:
            raise BadParameter("restarts must be nonnegative")
        if self.restarts == 0 and not self.include_split_inits:
            raise BadParameter("need at least one initialisation")


@dataclass(frozen=True)
class ClusterResult:
    labeling: Labeling
    objective: float
    iterations_used: int
    init_id: int


def _entries(D) -> np.ndarray:
    return D.entries if isinstance(D, DissimilarityMatrix) else np.asarray(D, dtype=float)


def _labels(labeling) -> np.ndarray:
    return labeling.labels if isinstance(labeling, Labeling) else np.asarray(labeling)


def objective_lambda(D, labeling) -> float:
    """Within-cluster criterion over ordered pairs (diagonal terms are zero)."""
    E = _entries(D)
    lab = _labels(labeling)
    total = 0.0
    for c in (0, 1):
        idx = np.flatnonzero(lab == c)
        if idx.size == 0:
            raise EmptyCluster(f"cluster {c} is empty")
        sub = E[np.ix_(idx, idx)]
        total += float(np.sum(sub * sub)) / (2 * idx.size)
    return total


def point_to_cluster(D, i: int, members) -> float:
    """Surrogate squared distance ``d0`` from point ``i`` to ``members``.

    For non-Euclidean dissimilarities the value can be negative.
    """
    E = _entries(D)
    idx = np.asarray(members, dtype=int).ravel()
    if idx.size == 0:
        raise EmptyCluster("cannot measure distance to an empty cluster")
    row = E[i, idx]
    sub = E[np.ix_(idx, idx)]
    m = idx.size
    return float(np.sum(row * row) / m - np.sum(sub * sub) / (2 * m * m))


def initial_labelings(n: int, config: ClusterConfig) -> np.ndarray:
    """Starting label rows, one per initialisation; row index is the init id.

    Temporal splits come first (init ids ``0 .. n-2``), then the random
    balanced bipartitions, each drawn from a generator keyed by
    ``(rng_seed, init_id)``.
    """
    rows = []
    if config.include_split_inits:
        for t in range(1, n):
            row = np.zeros(n, dtype=np.int8)
            row[t:] = 1
            rows.append(row)
    offset = n - 1 if config.include_split_inits else 0
    for r in range(config.restarts):
        init_id = offset + r
        rng = np.random.default_rng(np.random.SeedSequence(config.rng_seed, spawn_key=(init_id,)))
        row = np.ones(n, dtype=np.int8)
        row[rng.permutation(n)[: n // 2]] = 0
        rows.append(row)
    return np.array(rows, dtype=np.int8).reshape(len(rows), n)


def _sweep_stats(D2: np.ndarray, L: np.ndarray):
    """Objective and d0 to both clusters for every label row of ``L``."""
    M1 = (L == 1).astype(float)
    M0 = 1.0 - M1
    c0 = M0.sum(axis=1)
    c1 = M1.sum(axis=1)
    S0 = M0 @ D2
    S1 = M1 @ D2
    W0 = np.sum(S0 * M0, axis=1)
    W1 = np.sum(S1 * M1, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        obj = W0 / (2 * c0) + W1 / (2 * c1)
        d0 = S0 / c0[:, None] - (W0 / (2 * c0 * c0))[:, None]
        d1 = S1 / c1[:, None] - (W1 / (2 * c1 * c1))[:, None]
    return obj, d0, d1


def _polish(D2: np.ndarray, L: np.ndarray, obj: np.ndarray, max_moves: int):
    """Single-point transfers that lower the objective, best move first.

    Works in place on ``L``; returns the new objectives and move counts.
    """
    K, n = L.shape
    rows = np.arange(K)
    moves = np.zeros(K, dtype=int)
    obj = obj.copy()
    for _ in range(max_moves):
        M1 = (L == 1).astype(float)
        M0 = 1.0 - M1
        c0 = M0.sum(axis=1, keepdims=True)
        c1 = M1.sum(axis=1, keepdims=True)
        S0 = M0 @ D2
        S1 = M1 @ D2
        W0 = np.sum(S0 * M0, axis=1, keepdims=True)
        W1 = np.sum(S1 * M1, axis=1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            # objective after moving point i to the other cluster
            from0 = (W0 - 2 * S0) / (2 * (c0 - 1)) + (W1 + 2 * S1) / (2 * (c1 + 1))
            from1 = (W0 + 2 * S0) / (2 * (c0 + 1)) + (W1 - 2 * S1) / (2 * (c1 - 1))
        cand = np.where(L == 0, np.where(c0 > 1, from0, np.inf), np.where(c1 > 1, from1, np.inf))
        i = np.argmin(cand, axis=1)
        val = cand[rows, i]
        improve = val < obj * (1 - 1e-12) - 1e-300
        if not improve.any():
            break
        k = rows[improve]
        L[k, i[improve]] = 1 - L[k, i[improve]]
        obj[k] = val[improve]
        moves[k] += 1
    return obj, moves


def two_means(D, config: ClusterConfig | None = None) -> ClusterResult:
    """Best two-cluster partition over all initialisations.

    Every start runs synchronous sweeps: ``d0`` to both clusters is computed
    for all points and all points move at once.  A point keeps its label when
    the two distances tie.  If a sweep would empty a cluster, the point with
    the largest ``d0`` to the absorbing cluster stays behind.  The lowest
    objective seen at any sweep of any start is then refined by single-point
    transfers while they strictly lower the objective, and the lowest result
    wins; ties go to the lower init id.  Labels are returned with the first
    observation in cluster 0.
    """
    config = config or ClusterConfig()
    E = _entries(D)
    n = E.shape[0]
    if n < 2:
        raise DegenerateInput(f"two_means needs n >= 2, got {n}")
    D2 = E * E
    L = initial_labelings(n, config)
    K = L.shape[0]
    rows = np.arange(K)

    obj, d0, d1 = _sweep_stats(D2, L)
    best_obj = obj.copy()
    best_lab = L.copy()
    best_iter = np.zeros(K, dtype=int)
    active = np.ones(K, dtype=bool)

    for it in range(1, config.max_iterations + 1):
        if not active.any():
            break
        new = L.copy()
        new[d0 < d1] = 0
        new[d1 < d0] = 1
        # keep one point behind in a cluster that would otherwise vanish
        sizes = new.sum(axis=1)
        for k in np.flatnonzero((sizes == 0) | (sizes == n)):
            absorbing = new[k, 0]
            far = d0[k] if absorbing == 0 else d1[k]
            new[k, int(np.argmax(far))] = 1 - absorbing
        changed = np.any(new != L, axis=1) & active
        active = changed
        if not active.any():
            break
        L[active] = new[active]
        o, a, b = _sweep_stats(D2, L[active])
        idx = rows[active]
        obj[idx], d0[idx], d1[idx] = o, a, b
        better = o < best_obj[idx]
        best_obj[idx[better]] = o[better]
        best_lab[idx[better]] = L[idx[better]]
        best_iter[idx] = it

    best_obj, polish_moves = _polish(D2, best_lab, best_obj, config.max_iterations)
    winner = int(np.lexsort((rows, best_obj))[0])
    labeling = Labeling.from_labels(best_lab[winner]).canonical()
    return ClusterResult(
        labeling=labeling,
        objective=objective_lambda(E, labeling),
        iterations_used=int(best_iter[winner] + polish_moves[winner]),
        init_id=winner,
    )
