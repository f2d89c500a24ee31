"""Single change-point statistics and the level-alpha test.

After clustering, each observation carries a 0/1 label.  A split at ``t``
is compared with the labeling through either the Rand index (pairs on which
the split and the clustering disagree) or the average impurity of the two
segments.  Both are small when the clusters line up with the segments, and
both are minimised only where consecutive labels differ, so the scan is
restricted to those candidate positions.

Values that are rational in the counts (Rand, Gini, misclassification) are
computed as one integer numerator over one integer denominator.  Equal
fractions therefore give identical floats, which keeps null supports and
tie-breaking exact.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import __version__
from .cluster import ClusterConfig, two_means
from .core import ChangePointReport, DataSequence, Labeling, SegmentNode, validate_sequence
from .dissim import DELTA0, DissimilaritySpec, dissimilarity_matrix
from .exceptions import BadParameter, ConstantLabeling, IndexOutOfRange, TooShort
from .nulldist import DEFAULT_NULL_SEED, NullCache, decide, default_cache, register_statistic

__all__ = [
    "IMPURITY_KINDS",
    "STATISTICS",
    "phi",
    "SplitTrace",
    "SplitStatistic",
    "rand_index_at",
    "impurity_at",
    "split_values",
    "candidate_splits",
    "minimize_statistic",
    "decide_from_labels",
    "single_changepoint_test",
    "derive_run_seeds",
]

IMPURITY_KINDS = ("gini", "entropy", "misclassification")
STATISTICS = ("rand",) + IMPURITY_KINDS


def phi(p, kind: str = "gini"):
    """Impurity function of a proportion ``p``."""
    p = np.asarray(p, dtype=float)
    if kind == "gini":
        return 2 * p * (1 - p)
    if kind == "entropy":
        with np.errstate(divide="ignore", invalid="ignore"):
            q = 1 - p
            a = np.where(p > 0, -p * np.log(np.where(p > 0, p, 1.0)), 0.0)
            b = np.where(q > 0, -q * np.log(np.where(q > 0, q, 1.0)), 0.0)
        return a + b
    if kind == "misclassification":
        return np.minimum(p, 1 - p)
    raise BadParameter(f"unknown impurity {kind!r}; choose from {IMPURITY_KINDS}")


def _xlogx_pair(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``(a+b) log(a+b) - a log a - b log b`` with the smaller count first."""
    lo = np.minimum(a, b).astype(float)
    hi = np.maximum(a, b).astype(float)
    tot = lo + hi
    with np.errstate(divide="ignore", invalid="ignore"):
        xl = lambda x: np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0)  # noqa: E731
        return xl(tot) - xl(lo) - xl(hi)


def _batch_values(batch: np.ndarray, statistic: str) -> np.ndarray:
    """Statistic at every split ``t = 1 .. n-1`` for each label row.

    ``batch`` is ``(m, n)`` with entries 0/1; the result is ``(m, n-1)``.
    """
    batch = np.asarray(batch)
    m, n = batch.shape
    zeros = (batch == 0).astype(np.int64)
    t = np.arange(1, n, dtype=np.int64)[None, :]
    t0 = np.cumsum(zeros, axis=1)[:, :-1]  # zeros among the first t
    t1 = t - t0
    n1 = zeros.sum(axis=1, keepdims=True)
    n2 = n - n1
    rest = n - t
    c0 = n1 - t0  # zeros after t
    c1 = rest - c0
    if statistic == "rand":
        return ((n1 - t0 + t1) * (n2 - t1 + t0)) / (n * (n - 1) // 2)
    if statistic == "gini":
        return (2 * (t0 * t1 * rest + c0 * c1 * t)) / (n * t * rest)
    if statistic == "misclassification":
        return (np.minimum(t0, t1) + np.minimum(c0, c1)) / n
    if statistic == "entropy":
        return (_xlogx_pair(t0, t1) + _xlogx_pair(c0, c1)) / n
    raise BadParameter(f"unknown statistic {statistic!r}; choose from {STATISTICS}")


def _check_t(n: int, t: int) -> None:
    if not 1 <= t <= n - 1:
        raise IndexOutOfRange(f"split {t} outside 1..{n - 1}")


def _as_labeling(labels) -> Labeling:
    if isinstance(labels, Labeling):
        return labels
    if isinstance(labels, str):
        return Labeling.from_string(labels)
    return Labeling.from_labels(labels)


def rand_index_at(labels, t: int) -> float:
    """Share of pairs on which the split at ``t`` and the labeling disagree."""
    lab = _as_labeling(labels)
    _check_t(lab.n, t)
    return float(_batch_values(lab.labels[None, :], "rand")[0, t - 1])


def impurity_at(labels, t: int, kind: str = "gini") -> float:
    """Size-weighted impurity of the segments ``1..t`` and ``t+1..n``."""
    lab = _as_labeling(labels)
    _check_t(lab.n, t)
    if kind not in IMPURITY_KINDS:
        raise BadParameter(f"unknown impurity {kind!r}; choose from {IMPURITY_KINDS}")
    return float(_batch_values(lab.labels[None, :], kind)[0, t - 1])


def split_values(labels, statistic: str = "gini") -> np.ndarray:
    """Statistic for every split ``t = 1 .. n-1`` (index ``t - 1``)."""
    lab = _as_labeling(labels)
    return _batch_values(lab.labels[None, :], statistic)[0]


def candidate_splits(labels) -> list[int]:
    """Positions ``t`` where the labels of ``t`` and ``t + 1`` differ."""
    lab = _as_labeling(labels).labels
    return [int(i) + 1 for i in np.flatnonzero(lab[:-1] != lab[1:])]


_TOLERANCE = {"rand": 0.0, "gini": 0.0, "misclassification": 0.0, "entropy": 1e-12}


def _argmin_smallest(values: np.ndarray, tol: float) -> int:
    best = values.min()
    hits = values <= best + tol * abs(best)
    return int(np.flatnonzero(hits)[0])


@dataclass(frozen=True)
class SplitTrace:
    """Per-split statistic values, the candidate splits and the smallest minimiser."""

    statistic: str
    values: np.ndarray
    candidates: tuple[int, ...]
    argmin: int
    min_value: float

    def rows(self):
        """``(t, value, is_candidate)`` tuples for reporting."""
        cand = set(self.candidates)
        return [(t, float(v), t in cand) for t, v in enumerate(self.values, start=1)]


def minimize_statistic(labels, statistic: str = "gini") -> SplitTrace:
    """Smallest minimiser of the statistic over all splits ``1 .. n-1``.

    For the strictly concave impurities the minimum always lies in the
    candidate set; for the Rand index it can also sit at ``t = 1`` or
    ``t = n - 1``, so every split is scanned.

    Raises
    ------
    ConstantLabeling
        If all labels are equal, so there is no candidate.
    """
    lab = _as_labeling(labels)
    values = split_values(lab, statistic)
    cands = candidate_splits(lab)
    if not cands:
        raise ConstantLabeling("all observations share one label")
    k = _argmin_smallest(values, _TOLERANCE[statistic])
    return SplitTrace(statistic, values, tuple(cands), k + 1, float(values[k]))


@dataclass(frozen=True)
class SplitStatistic:
    """Minimum over all splits, as an arrangement statistic."""

    statistic: str = "gini"

    def __post_init__(self):
        if self.statistic not in STATISTICS:
            raise BadParameter(f"unknown statistic {self.statistic!r}; choose from {STATISTICS}")

    @property
    def id(self) -> str:
        return f"{self.statistic}_min"

    @property
    def params(self) -> dict:
        return {}

    @property
    def tolerance(self) -> float:
        return _TOLERANCE[self.statistic]

    def __call__(self, batch: np.ndarray) -> np.ndarray:
        return _batch_values(np.asarray(batch), self.statistic).min(axis=1)


# the registry calls factories with keyword params only; bind the ids here
for _name in STATISTICS:
    register_statistic(f"{_name}_min")(lambda _n=_name, **kw: SplitStatistic(_n))


def derive_run_seeds(seed: int) -> tuple[int, float]:
    """Clustering seed and decision coin derived from a master seed."""
    cluster_ss, coin_ss = np.random.SeedSequence(seed).spawn(2)
    cluster_seed = int(cluster_ss.generate_state(1, dtype=np.uint64)[0])
    coin = float(np.random.Generator(np.random.Philox(coin_ss)).random())
    return cluster_seed, coin


def decide_from_labels(labels, statistic: str = "gini", alpha: float = 0.05, coin: float = 0.0,
                       cache: NullCache | None = None, null_method: str = "auto",
                       permutations: int | None = None, null_seed: int = DEFAULT_NULL_SEED):
    """Run the randomized test on a stored labeling.

    Returns ``(trace, decision, null_distribution)``; ``trace`` is ``None``
    and the decision is acceptance when the labeling is constant.
    """
    lab = _as_labeling(labels)
    cache = cache if cache is not None else default_cache()
    try:
        trace = minimize_statistic(lab, statistic)
    except ConstantLabeling:
        return None, None, None
    dist, th = cache.get_or_compute(SplitStatistic(statistic), lab.n1, lab.n2, alpha,
                                    method=null_method, M=permutations, seed=null_seed)
    return trace, decide(dist, alpha, trace.min_value, coin, th), dist


def single_changepoint_test(data, spec: DissimilaritySpec = DELTA0, statistic: str = "gini",
                            alpha: float = 0.05, config: ClusterConfig | None = None, seed: int = 0,
                            cache: NullCache | None = None, null_method: str = "auto",
                            permutations: int | None = None,
                            null_seed: int = DEFAULT_NULL_SEED) -> ChangePointReport:
    """Cluster, locate the best split and test it at level ``alpha``.

    The report lists the change-point only when the no-change hypothesis is
    rejected.  Data whose dissimilarities all vanish give no structure and
    the hypothesis is accepted.
    """
    if not isinstance(data, DataSequence):
        data = validate_sequence(data)
    if data.n < 4:
        raise TooShort(f"single change-point test needs n >= 4, got {data.n}")
    if statistic not in STATISTICS:
        raise BadParameter(f"unknown statistic {statistic!r}; choose from {STATISTICS}")
    cluster_seed, coin = derive_run_seeds(seed)
    cfg = dataclasses.replace(config or ClusterConfig(), rng_seed=cluster_seed)
    D = dissimilarity_matrix(data, spec)
    meta = {
        "mode": "single",
        "version": __version__,
        "dissimilarity": spec.to_dict(),
        "statistic": f"{statistic}_min",
        "alpha": alpha,
        "seed": seed,
        "cluster_seed": cluster_seed,
        "cluster": dataclasses.asdict(cfg),
        "coin": coin,
        "null_method": null_method,
        "permutations": permutations,
        "null_seed": null_seed,
        "n": data.n,
        "d": data.d,
    }
    node = SegmentNode(lo=1, hi=data.n, coin=coin)
    if not np.any(D.entries):
        node.note = "constant labeling: all dissimilarities are zero"
        meta["labels"] = None
        return ChangePointReport([], [node], meta)
    result = two_means(D, cfg)
    lab = result.labeling
    meta.update(labels=str(lab), objective=result.objective, init_id=result.init_id)
    trace, dec, dist = decide_from_labels(lab, statistic, alpha, coin, cache, null_method,
                                          permutations, null_seed)
    node.n1, node.n2 = lab.n1, lab.n2
    if trace is None:
        node.note = "constant labeling"
        return ChangePointReport([], [node], meta)
    node.statistic = trace.min_value
    node.split = trace.argmin
    node.p_value = dec.p_value
    node.threshold = dec.r_alpha
    node.gamma = dec.gamma
    node.reject = dec.reject
    meta["null"] = {"method": dist.method, "M": dist.M, "seed": dist.seed}
    return ChangePointReport([trace.argmin] if dec.reject else [], [node], meta)
