"""Permutation null distributions of arrangement statistics.

Under the no-change hypothesis every arrangement of ``n1`` zeros and ``n2``
ones is equally likely given the cluster counts, whatever the data
distribution.  An *arrangement statistic* maps a batch of 0/1 label rows to
one value per row; this module enumerates or samples arrangements, builds the
discrete null law, and turns it into a randomized level-``alpha`` test that
rejects for small values.

Statistics are plain objects with

* ``id``: short string used in cache keys,
* ``params``: JSON-serialisable dict of settings that change the values,
* ``tolerance``: relative tolerance under which two values count as equal,
* ``__call__(batch)``: ``(m, n)`` int8 array to ``(m,)`` float array.

Optional attributes ``exact_cap`` and ``default_permutations`` override the
enumeration cap and Monte-Carlo size used by :func:`null_distribution`.
String ids resolve through a registry that the statistic modules fill in.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from math import comb
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .exceptions import BadParameter, CacheIO, TooLarge

__all__ = [
    "NullDistribution",
    "RandomizedThreshold",
    "Decision",
    "NullCache",
    "EXACT_CAP",
    "DEFAULT_PERMUTATIONS",
    "DEFAULT_NULL_SEED",
    "CACHE_VERSION",
    "register_statistic",
    "resolve_statistic",
    "exact_null",
    "monte_carlo_null",
    "null_distribution",
    "randomized_threshold",
    "decide",
    "rejection_probability",
    "derive_null_seed",
    "default_cache",
]

EXACT_CAP = 2_000_000
DEFAULT_PERMUTATIONS = 100_000
DEFAULT_NULL_SEED = 20240917
CACHE_VERSION = 1
CACHE_ENV = "HDCPD_CACHE_DIR"

_BATCH = 20_000

_REGISTRY: dict[str, Callable[..., Any]] = {}


def register_statistic(stat_id: str):
    """Class or factory decorator adding ``stat_id`` to the registry."""

    def wrap(factory):
        _REGISTRY[stat_id] = factory
        return factory

    return wrap


def resolve_statistic(statistic, **params):
    """Return a statistic object for an id string or pass an object through."""
    if not isinstance(statistic, str):
        return statistic
    if statistic not in _REGISTRY:
        # the statistic modules register themselves on import
        from . import multicp, singlecp  # noqa: F401
    try:
        factory = _REGISTRY[statistic]
    except KeyError:
        raise BadParameter(f"unknown statistic {statistic!r}; known: {sorted(_REGISTRY)}") from None
    return factory(**params)


@dataclass(frozen=True)
class NullDistribution:
    """Discrete law of a statistic given the cluster counts.

    ``support`` is strictly increasing and ``probs`` sums to one.
    """

    statistic_id: str
    n1: int
    n2: int
    support: np.ndarray
    probs: np.ndarray
    method: str
    M: int | None = None
    seed: int | None = None
    params: dict = field(default_factory=dict)
    tolerance: float = 0.0

    def cdf_below(self) -> np.ndarray:
        """``P(Z < v)`` for each support value ``v``."""
        c = np.cumsum(self.probs)
        return np.concatenate([[0.0], c[:-1]])

    def prob_of(self, value: float) -> float:
        hit = _close(self.support, value, self.tolerance)
        return float(self.probs[hit].sum())

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic_id,
            "n1": self.n1,
            "n2": self.n2,
            "method": self.method,
            "M": self.M,
            "seed": self.seed,
            "params": self.params,
            "tolerance": self.tolerance,
            "support": [float(v) for v in self.support],
            "probs": [float(p) for p in self.probs],
        }


@dataclass(frozen=True)
class RandomizedThreshold:
    r_alpha: float
    gamma: float
    alpha: float


@dataclass(frozen=True)
class Decision:
    reject: bool
    observed: float
    p_value: float
    r_alpha: float
    gamma: float
    coin: float
    alpha: float


def _close(a, b, tol: float):
    a = np.asarray(a, dtype=float)
    if tol == 0:
        return a == b
    return np.abs(a - b) <= tol * np.maximum(np.abs(a), abs(b))


def _tally(values: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Distinct values and their counts, merging runs within ``tol``."""
    support, counts = np.unique(values, return_counts=True)
    if tol > 0 and support.size > 1:
        keep = np.ones(support.size, dtype=bool)
        anchor = support[0]
        for i in range(1, support.size):
            if _close(support[i], anchor, tol):
                keep[i] = False
            else:
                anchor = support[i]
        group = np.cumsum(keep) - 1
        counts = np.bincount(group, weights=counts).astype(np.int64)
        support = support[keep]
    return support, counts


def _canonical_counts(n1: int, n2: int) -> tuple[int, int]:
    # statistics are invariant under swapping the labels, so both orders
    # share one computation
    return (n1, n2) if n1 >= n2 else (n2, n1)


def _finish(stat, n1, n2, values_or_tally, total, method, M=None, seed=None) -> NullDistribution:
    support, counts = values_or_tally
    probs = counts / total
    return NullDistribution(
        statistic_id=stat.id, n1=n1, n2=n2, support=support.astype(float), probs=probs.astype(float),
        method=method, M=M, seed=seed, params=dict(stat.params), tolerance=float(stat.tolerance),
    )


def _merge(tallies: list[tuple[np.ndarray, np.ndarray]], tol: float):
    support = np.concatenate([t[0] for t in tallies])
    counts = np.concatenate([t[1] for t in tallies])
    order = np.argsort(support, kind="stable")
    support, counts = support[order], counts[order]
    uniq, inv = np.unique(support, return_inverse=True)
    summed = np.bincount(inv.ravel(), weights=counts).astype(np.int64)
    if tol > 0:
        # re-merge near-equal values across chunks
        expanded = np.repeat(uniq, summed)
        return _tally(expanded, tol)
    return uniq, summed


def exact_null(n1: int, n2: int, statistic, cap: int = EXACT_CAP) -> NullDistribution:
    """Evaluate the statistic on every arrangement of ``n1`` zeros and ``n2`` ones.

    Raises
    ------
    TooLarge
        If there are more than ``cap`` arrangements.
    """
    stat = resolve_statistic(statistic)
    if n1 < 0 or n2 < 0 or n1 + n2 < 1:
        raise BadParameter("counts must be nonnegative with a positive total")
    n = n1 + n2
    total = comb(n, n1)
    if total > cap:
        raise TooLarge(f"C({n}, {n1}) = {total} arrangements exceed the cap {cap}")
    _, k = _canonical_counts(n1, n2)
    combos = itertools.combinations(range(n), k)
    tallies = []
    while True:
        chunk = list(itertools.islice(combos, _BATCH))
        if not chunk:
            break
        batch = np.zeros((len(chunk), n), dtype=np.int8)
        if k:
            idx = np.array(chunk, dtype=np.intp)
            batch[np.arange(len(chunk))[:, None], idx] = 1
        tallies.append(_tally(np.asarray(stat(batch), dtype=float), stat.tolerance))
    return _finish(stat, n1, n2, _merge(tallies, stat.tolerance), total, "exact")


def monte_carlo_null(n1: int, n2: int, statistic, M: int = DEFAULT_PERMUTATIONS,
                     seed: int = DEFAULT_NULL_SEED) -> NullDistribution:
    """Empirical law over ``M`` uniformly drawn arrangements (deterministic in ``seed``)."""
    stat = resolve_statistic(statistic)
    if M < 1:
        raise BadParameter("M must be at least 1")
    n = n1 + n2
    _, k = _canonical_counts(n1, n2)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    tallies = []
    done = 0
    while done < M:
        m = min(_BATCH, M - done)
        ranks = np.argsort(rng.random((m, n)), axis=1)
        batch = (ranks < k).astype(np.int8)
        tallies.append(_tally(np.asarray(stat(batch), dtype=float), stat.tolerance))
        done += m
    return _finish(stat, n1, n2, _merge(tallies, stat.tolerance), M, "monte_carlo", M, seed)


def derive_null_seed(base_seed: int, stat_id: str, n1: int, n2: int, params: dict | None = None) -> int:
    """Stable per-key seed so Monte-Carlo nulls can be cached and shared."""
    lo, hi = sorted((n1, n2))
    tag = stat_id + json.dumps(params or {}, sort_keys=True)
    digest = int.from_bytes(hashlib.sha256(tag.encode()).digest()[:8], "little")
    ss = np.random.SeedSequence([base_seed, digest, lo, hi])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def null_distribution(n1: int, n2: int, statistic, method: str = "auto", M: int | None = None,
                      seed: int = DEFAULT_NULL_SEED, cap: int | None = None) -> NullDistribution:
    """Exact law when small enough (``method='auto'``), Monte Carlo otherwise."""
    stat = resolve_statistic(statistic)
    cap = getattr(stat, "exact_cap", EXACT_CAP) if cap is None else cap
    M = getattr(stat, "default_permutations", DEFAULT_PERMUTATIONS) if M is None else M
    if method == "auto":
        method = "exact" if comb(n1 + n2, n1) <= cap else "monte_carlo"
    if method == "exact":
        return exact_null(n1, n2, stat, cap=max(cap, comb(n1 + n2, n1)))
    if method == "monte_carlo":
        return monte_carlo_null(n1, n2, stat, M, derive_null_seed(seed, stat.id, n1, n2, stat.params))
    raise BadParameter(f"unknown null method {method!r}")


def randomized_threshold(dist: NullDistribution, alpha: float) -> RandomizedThreshold:
    """Cut-off ``r`` and boundary weight ``gamma`` of the exact-size test.

    ``r`` is the largest support value with ``P(Z < r) <= alpha`` and
    ``gamma = (alpha - P(Z < r)) / P(Z = r)``.
    """
    if not 0 < alpha < 1:
        raise BadParameter("alpha must lie in (0, 1)")
    below = dist.cdf_below()
    i = int(np.flatnonzero(below <= alpha)[-1])
    gamma = (alpha - below[i]) / dist.probs[i]
    gamma = min(max(gamma, 0.0), math.nextafter(1.0, 0.0))
    return RandomizedThreshold(float(dist.support[i]), float(gamma), float(alpha))


def decide(dist: NullDistribution, alpha: float, observed: float, coin: float,
           threshold: RandomizedThreshold | None = None) -> Decision:
    """Randomized decision: reject below ``r``, and at ``r`` when ``coin < gamma``.

    The p-value is the left tail ``P(Z <= observed)``.
    """
    if not 0 <= coin < 1:
        raise BadParameter("coin must lie in [0, 1)")
    th = threshold or randomized_threshold(dist, alpha)
    tol = dist.tolerance
    at = bool(_close(np.array([observed]), th.r_alpha, tol)[0])
    reject = (observed < th.r_alpha and not at) or (at and coin < th.gamma)
    tail = (dist.support <= observed) | _close(dist.support, observed, tol)
    p_value = float(min(1.0, dist.probs[tail].sum()))
    return Decision(bool(reject), float(observed), p_value, th.r_alpha, th.gamma, float(coin), th.alpha)


def rejection_probability(dist: NullDistribution, th: RandomizedThreshold) -> float:
    """Expected rejection rate of the randomized test when ``dist`` is the truth."""
    below = dist.support < th.r_alpha
    at = dist.support == th.r_alpha
    return float(dist.probs[below].sum() + th.gamma * dist.probs[at].sum())


class NullCache:
    """Null laws and thresholds kept in memory and, optionally, on disk.

    Each key ``(statistic, n1, n2, alpha, method, M, seed, params)`` maps to
    one JSON document in ``directory``.  Files with an unknown version or
    that fail to parse are recomputed and overwritten.  ``computations``
    counts how many null laws were actually built.
    """

    def __init__(self, directory: str | os.PathLike | None = None):
        self.directory = Path(directory) if directory is not None else None
        self._dists: dict[tuple, NullDistribution] = {}
        self._thresholds: dict[tuple, RandomizedThreshold] = {}
        self.computations = 0

    def _dist_key(self, stat, n1, n2, method, M, seed):
        lo, hi = _canonical_counts(n1, n2)
        return (stat.id, lo, hi, method, M, seed, json.dumps(stat.params, sort_keys=True))

    def _path(self, key: tuple, alpha: float) -> Path:
        stat_id, lo, hi, method, M, seed, params = key
        phash = hashlib.sha256(params.encode()).hexdigest()[:10]
        name = f"{stat_id}_{lo}_{hi}_a{alpha!r}_{method}_M{M}_s{seed}_{phash}.json"
        return self.directory / name

    def _resolve_method(self, stat, n1, n2, method, M, seed, cap):
        cap = getattr(stat, "exact_cap", EXACT_CAP) if cap is None else cap
        if method == "auto":
            method = "exact" if comb(n1 + n2, n1) <= cap else "monte_carlo"
        if method == "exact":
            return method, None, None
        M = getattr(stat, "default_permutations", DEFAULT_PERMUTATIONS) if M is None else M
        return method, int(M), int(seed)

    def _load(self, path: Path, key: tuple, alpha: float):
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError:
            return None
        except (OSError, ValueError):
            return None
        if not isinstance(doc, dict) or doc.get("version") != CACHE_VERSION:
            return None
        try:
            stat_id, lo, hi, method, M, seed, params = key
            if (doc["statistic"], doc["n1"], doc["n2"], doc["method"], doc["M"], doc["seed"]) != \
                    (stat_id, lo, hi, method, M, seed) or doc["alpha"] != alpha:
                return None
            if json.dumps(doc["params"], sort_keys=True) != params:
                return None
            dist = NullDistribution(
                statistic_id=stat_id, n1=lo, n2=hi,
                support=np.array(doc["support"], dtype=float), probs=np.array(doc["probs"], dtype=float),
                method=method, M=M, seed=seed, params=doc["params"], tolerance=float(doc["tolerance"]),
            )
            th = RandomizedThreshold(float(doc["r_alpha"]), float(doc["gamma"]), float(alpha))
        except (KeyError, TypeError, ValueError):
            return None
        return dist, th

    def _store(self, path: Path, dist: NullDistribution, th: RandomizedThreshold) -> None:
        doc = dist.to_dict()
        doc.update({"alpha": th.alpha, "r_alpha": th.r_alpha, "gamma": th.gamma, "version": CACHE_VERSION})
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
            with os.fdopen(fd, "w") as fh:
                json.dump(doc, fh)
            os.replace(tmp, path)
        except OSError as exc:
            raise CacheIO(f"cannot write cache file {path}: {exc}") from exc

    def get_or_compute(self, statistic, n1: int, n2: int, alpha: float, method: str = "auto",
                       M: int | None = None, seed: int = DEFAULT_NULL_SEED,
                       cap: int | None = None) -> tuple[NullDistribution, RandomizedThreshold]:
        """Null law and threshold for the key, computing and persisting on a miss."""
        stat = resolve_statistic(statistic)
        method, M, base = self._resolve_method(stat, n1, n2, method, M, seed, cap)
        run_seed = None if method == "exact" else derive_null_seed(base, stat.id, n1, n2, stat.params)
        key = self._dist_key(stat, n1, n2, method, M, run_seed)
        tkey = key + (float(alpha),)
        if tkey in self._thresholds:
            return self._dists[key], self._thresholds[tkey]
        path = self._path(key, float(alpha)) if self.directory is not None else None
        if path is not None:
            hit = self._load(path, key, float(alpha))
            if hit is not None:
                self._dists.setdefault(key, hit[0])
                self._thresholds[tkey] = hit[1]
                return self._dists[key], hit[1]
        dist = self._dists.get(key)
        if dist is None:
            lo, hi = key[1], key[2]
            if method == "exact":
                dist = exact_null(lo, hi, stat, cap=max(comb(lo + hi, lo), cap or 0))
            else:
                dist = monte_carlo_null(lo, hi, stat, M, run_seed)
            self.computations += 1
            self._dists[key] = dist
        th = randomized_threshold(dist, alpha)
        self._thresholds[tkey] = th
        if path is not None:
            self._store(path, dist, th)
        return dist, th


_DEFAULT_CACHE: NullCache | None = None


def default_cache() -> NullCache:
    """Process-wide cache; on disk when ``HDCPD_CACHE_DIR`` is set."""
    global _DEFAULT_CACHE
    directory = os.environ.get(CACHE_ENV) or None
    if _DEFAULT_CACHE is None or (_DEFAULT_CACHE.directory is not None) != (directory is not None) or (
            directory is not None and Path(directory) != _DEFAULT_CACHE.directory):
        _DEFAULT_CACHE = NullCache(directory)
    return _DEFAULT_CACHE
