"""Multiple change-points by windowed impurity p-values and binary segmentation.

For a prefix window ``1..s`` split at ``t``, let ``m1`` be the number of
zeros in the window and ``r`` the number of zeros in ``1..t``.  Given ``m1``,
``r`` is hypergeometric when there is no change, so the chance of an
impurity at most the observed one is an exact finite sum.  The smallest of
these p-values over all admissible ``(t, s)`` is the test statistic; its own
permutation law given the overall counts supplies the cut-off.  When the
test rejects, the sequence is cut at ``t`` and each side is processed again.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from math import comb

import numpy as np

from . import __version__
from .cluster import ClusterConfig, two_means
from .core import ChangePointReport, DataSequence, SegmentNode, validate_sequence
from .dissim import DELTA0, DissimilaritySpec, dissimilarity_matrix
from .exceptions import BadParameter, IndexOutOfRange, TooShort
from .nulldist import DEFAULT_NULL_SEED, Decision, NullCache, decide, default_cache, register_statistic
from .singlecp import IMPURITY_KINDS, _as_labeling, phi

__all__ = [
    "SegmentationConfig",
    "WindowPValueGrid",
    "PminStatistic",
    "window_impurity",
    "window_pvalue",
    "pmin_scan",
    "pmin_test",
    "segment",
    "PMIN_EXACT_CAP",
    "PMIN_PERMUTATIONS",
]

PMIN_EXACT_CAP = 5000
PMIN_PERMUTATIONS = 2000
_ENTROPY_TOL = 1e-12


@dataclass(frozen=True)
class SegmentationConfig:
    """Settings for the windowed test and the recursion.

    Parameters
    ----------
    alpha
        Level of each segment test.
    min_gap
        Minimum number of observations on either side of a split.
    max_depth
        Recursion depth cap.
    permutations
        Monte-Carlo size for the null of the minimum p-value.
    exact_cap
        Enumerate all arrangements when there are at most this many.
    kind
        Impurity function.
    """

    alpha: float = 0.05
    min_gap: int = 5
    max_depth: int = 10
    permutations: int = PMIN_PERMUTATIONS
    exact_cap: int = PMIN_EXACT_CAP
    null_seed: int = DEFAULT_NULL_SEED
    kind: str = "gini"
    null_method: str = "auto"

    def __post_init__(self):
        if self.min_gap < 2:
            raise BadParameter("min_gap must be at least 2")
        if not 0 < self.alpha < 1:
            raise BadParameter("alpha must lie in (0, 1)")
        if self.kind not in IMPURITY_KINDS:
            raise BadParameter(f"unknown impurity {self.kind!r}; choose from {IMPURITY_KINDS}")
        if self.max_depth < 0:
            raise BadParameter("max_depth must be nonnegative")


def _check_window(n: int, t: int, s: int) -> None:
    if not 1 <= t < s <= n:
        raise IndexOutOfRange(f"window (t={t}, s={s}) needs 1 <= t < s <= {n}")


def _impurity_counts(t: int, s: int, m1, r, kind: str):
    u = s - t
    return (t / s) * phi(np.asarray(r) / t, kind) + (u / s) * phi((m1 - np.asarray(r)) / u, kind)


def window_impurity(labels, t: int, s: int, kind: str = "gini") -> float:
    """Impurity of the prefix ``1..s`` split after ``t``."""
    lab = _as_labeling(labels)
    _check_window(lab.n, t, s)
    zeros = lab.labels == 0
    return float(_impurity_counts(t, s, int(zeros[:s].sum()), int(zeros[:t].sum()), kind))


class _WindowTable:
    """p-values for one window ``(t, s)`` indexed by ``(m1, r)``; rows fill on demand."""

    def __init__(self, t: int, s: int, kind: str):
        self.t, self.s, self.kind = t, s, kind
        self.values = np.full((s + 1, t + 1), np.nan)
        self.filled = np.zeros(s + 1, dtype=bool)
        self.total = comb(s, t)

    def _keys(self, m1: int, rs: range):
        t, s, u = self.t, self.s, self.s - self.t
        if self.kind == "gini":
            # Gini impurity falls as r moves away from the mean m1 t / s
            return [-abs(r * s - m1 * t) for r in rs], 0
        if self.kind == "misclassification":
            return [min(r, t - r) + min(m1 - r, u - m1 + r) for r in rs], 0
        return [float(v) for v in _impurity_counts(t, s, m1, np.array(rs), "entropy")], _ENTROPY_TOL

    def fill(self, m1: int) -> None:
        t, s = self.t, self.s
        rs = range(max(0, t - (s - m1)), min(t, m1) + 1)
        weights = [comb(m1, r) * comb(s - m1, t - r) for r in rs]
        keys, tol = self._keys(m1, rs)
        for r, k in zip(rs, keys):
            num = sum(w for w, k2 in zip(weights, keys) if k2 <= k + tol)
            self.values[m1, r] = num / self.total
        self.filled[m1] = True

    def lookup(self, m1: np.ndarray, r: np.ndarray) -> np.ndarray:
        missing = np.unique(m1[~self.filled[m1]])
        for v in missing:
            self.fill(int(v))
        return self.values[m1, r]


_TABLES: dict[tuple[int, int, str], _WindowTable] = {}


def _table(t: int, s: int, kind: str) -> _WindowTable:
    key = (t, s, kind)
    tab = _TABLES.get(key)
    if tab is None:
        tab = _TABLES[key] = _WindowTable(t, s, kind)
    return tab


def window_pvalue(labels, t: int, s: int, kind: str = "gini") -> float:
    """Chance, given the zeros in ``1..s``, of an impurity at most the observed one."""
    lab = _as_labeling(labels)
    _check_window(lab.n, t, s)
    if kind not in IMPURITY_KINDS:
        raise BadParameter(f"unknown impurity {kind!r}; choose from {IMPURITY_KINDS}")
    zeros = lab.labels == 0
    m1 = np.array([zeros[:s].sum()])
    r = np.array([zeros[:t].sum()])
    return float(_table(t, s, kind).lookup(m1, r)[0])


def _admissible(n: int, min_gap: int) -> list[tuple[int, int]]:
    # s ascending, then t ascending: a strict improvement rule then breaks
    # ties towards the smallest s and the smallest t
    return [(t, s) for s in range(2 * min_gap, n + 1) for t in range(min_gap, s - min_gap + 1)]


def _scan(batch: np.ndarray, kind: str, min_gap: int, keep_grid: bool = False):
    batch = np.asarray(batch)
    m, n = batch.shape
    Z = np.zeros((m, n + 1), dtype=np.intp)
    np.cumsum(batch == 0, axis=1, out=Z[:, 1:])
    best = np.ones(m)
    arg = np.full(m, -1)
    grid = [] if keep_grid else None
    for k, (t, s) in enumerate(_admissible(n, min_gap)):
        p = _table(t, s, kind).lookup(Z[:, s], Z[:, t])
        better = p < best
        best[better] = p[better]
        arg[better] = k
        if keep_grid:
            grid.append(p[0])
    return best, arg, grid


@dataclass(frozen=True)
class WindowPValueGrid:
    """Admissible windows with impurities and p-values, and the minimiser."""

    cells: tuple[tuple[int, int], ...]
    impurity: np.ndarray
    pvalues: np.ndarray
    t0: int | None
    s0: int | None
    p_min: float

    def rows(self):
        """``(t, s, impurity, pvalue)`` tuples for reporting."""
        return [(t, s, float(i), float(p)) for (t, s), i, p in zip(self.cells, self.impurity, self.pvalues)]


def pmin_scan(labels, config: SegmentationConfig | None = None) -> WindowPValueGrid:
    """Evaluate every admissible window; ties go to the smallest ``s``, then ``t``.

    When no p-value is below one the minimiser is the first admissible cell.
    """
    config = config or SegmentationConfig()
    lab = _as_labeling(labels)
    if lab.n < 2 * config.min_gap:
        raise TooShort(f"need n >= {2 * config.min_gap}, got {lab.n}")
    cells = _admissible(lab.n, config.min_gap)
    best, arg, grid = _scan(lab.labels[None, :], config.kind, config.min_gap, keep_grid=True)
    zeros = np.concatenate([[0], np.cumsum(lab.labels == 0)])
    imp = np.array([float(_impurity_counts(t, s, zeros[s], zeros[t], config.kind)) for t, s in cells])
    k = int(arg[0]) if arg[0] >= 0 else 0
    t0, s0 = cells[k]
    return WindowPValueGrid(tuple(cells), imp, np.array(grid), t0, s0, float(best[0]))


@dataclass(frozen=True)
class PminStatistic:
    """Minimum window p-value, as an arrangement statistic."""

    kind: str = "gini"
    min_gap: int = 5
    exact_cap: int = PMIN_EXACT_CAP
    default_permutations: int = PMIN_PERMUTATIONS

    id = "pmin"
    tolerance = 0.0

    @property
    def params(self) -> dict:
        return {"kind": self.kind, "min_gap": self.min_gap}

    def __call__(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch)
        if batch.shape[1] < 2 * self.min_gap:
            return np.ones(batch.shape[0])
        return _scan(batch, self.kind, self.min_gap)[0]


register_statistic("pmin")(lambda **kw: PminStatistic(**kw))


@dataclass(frozen=True)
class PminDecision:
    grid: WindowPValueGrid
    decision: Decision
    null_method: str
    null_M: int | None
    null_seed: int | None

    @property
    def reject(self) -> bool:
        return self.decision.reject

    @property
    def changepoint(self) -> int | None:
        return self.grid.t0 if self.decision.reject else None


def pmin_test(labels, config: SegmentationConfig | None = None, coin: float = 0.0,
              cache: NullCache | None = None) -> PminDecision:
    """Randomized test of the minimum window p-value against its permutation law."""
    config = config or SegmentationConfig()
    lab = _as_labeling(labels)
    grid = pmin_scan(lab, config)
    cache = cache if cache is not None else default_cache()
    stat = PminStatistic(config.kind, config.min_gap, config.exact_cap, config.permutations)
    dist, th = cache.get_or_compute(stat, lab.n1, lab.n2, config.alpha, method=config.null_method,
                                    M=config.permutations, seed=config.null_seed, cap=config.exact_cap)
    dec = decide(dist, config.alpha, grid.p_min, coin, th)
    if lab.n1 == 0 or lab.n2 == 0:
        # one cluster carries no evidence; its degenerate null would reject by coin alone
        dec = dataclasses.replace(dec, reject=False)
    return PminDecision(grid, dec, dist.method, dist.M, dist.seed)


def _branch_seeds(seed: int, lo: int, hi: int) -> tuple[int, float]:
    cluster_ss, coin_ss = np.random.SeedSequence([seed, lo, hi]).spawn(2)
    cluster_seed = int(cluster_ss.generate_state(1, dtype=np.uint64)[0])
    coin = float(np.random.Generator(np.random.Philox(coin_ss)).random())
    return cluster_seed, coin


def segment(data, spec: DissimilaritySpec = DELTA0, config: SegmentationConfig | None = None,
            seed: int = 0, cluster_config: ClusterConfig | None = None,
            cache: NullCache | None = None, spec_factory=None) -> ChangePointReport:
    """Recursive binary segmentation.

    Each segment is clustered afresh (its own dissimilarity matrix) and
    tested; on rejection it is cut after ``t0`` and both sides are processed.
    Segments shorter than ``2 * min_gap`` or deeper than ``max_depth`` are
    left alone.  ``spec_factory``, if given, maps a segment's data to the
    dissimilarity to use there (for partitions formed from the data).
    """
    config = config or SegmentationConfig()
    if not isinstance(data, DataSequence):
        data = validate_sequence(data)
    if data.n < 2 * config.min_gap:
        raise TooShort(f"need n >= {2 * config.min_gap}, got {data.n}")
    base_cfg = cluster_config or ClusterConfig()
    nodes: list[SegmentNode] = []
    cps: list[int] = []
    seg_labels: dict[str, str] = {}
    stack = [(1, data.n, 0)]
    while stack:
        lo, hi, depth = stack.pop()
        if hi - lo + 1 < 2 * config.min_gap or depth > config.max_depth:
            continue
        cluster_seed, coin = _branch_seeds(seed, lo, hi)
        node = SegmentNode(lo=lo, hi=hi, coin=coin, depth=depth)
        nodes.append(node)
        sub = data.subsequence(lo, hi)
        seg_spec = spec_factory(sub) if spec_factory is not None else spec
        D = dissimilarity_matrix(sub, seg_spec)
        if not np.any(D.entries):
            node.note = "constant labeling: all dissimilarities are zero"
            continue
        result = two_means(D, dataclasses.replace(base_cfg, rng_seed=cluster_seed))
        lab = result.labeling
        out = pmin_test(lab, config, coin, cache)
        node.n1, node.n2 = lab.n1, lab.n2
        node.statistic = out.grid.p_min
        node.split = lo - 1 + out.grid.t0
        node.window_end = lo - 1 + out.grid.s0
        node.p_value = out.decision.p_value
        node.threshold = out.decision.r_alpha
        node.gamma = out.decision.gamma
        node.reject = out.reject
        seg_labels[f"{lo}:{hi}"] = str(lab)
        if out.reject:
            cp = node.split
            cps.append(cp)
            # push right first so the left branch is processed first
            stack.append((cp + 1, hi, depth + 1))
            stack.append((lo, cp, depth + 1))
    nodes.sort(key=lambda nd: (nd.lo, nd.depth))
    meta = {
        "mode": "multi",
        "version": __version__,
        "dissimilarity": spec.to_dict(),
        "statistic": "pmin",
        "impurity": config.kind,
        "alpha": config.alpha,
        "seed": seed,
        "min_gap": config.min_gap,
        "max_depth": config.max_depth,
        "permutations": config.permutations,
        "exact_cap": config.exact_cap,
        "null_seed": config.null_seed,
        "cluster": {k: v for k, v in dataclasses.asdict(base_cfg).items() if k != "rng_seed"},
        "n": data.n,
        "d": data.d,
        "labels": seg_labels,
    }
    return ChangePointReport(sorted(cps), nodes, meta)
