"""Replicated simulation runs and their summary tables.

A *method* pairs a dissimilarity preset with a statistic, e.g. ``GI0`` is
the mean-absolute-difference dissimilarity with Gini impurity and ``GI1``
uses the exponential-decay coordinate transform instead.  Data for a
replication depend only on the master seed, the scenario and the
replication index, so every method sees the same samples.
"""

from __future__ import annotations

import csv
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np

from .cluster import ClusterConfig
from .core import ChangePointReport, DataSequence
from .datagen import ScenarioSpec, build_scenario
from .dissim import DissimilaritySpec, form_blocks, preset
from .exceptions import BadParameter
from .multicp import SegmentationConfig, segment
from .robust import robust_single_changepoint_test
from .singlecp import single_changepoint_test

__all__ = [
    "METHODS",
    "MethodSpec",
    "resolve_method",
    "resolve_dissimilarity",
    "analyze",
    "derive_seed",
    "ExperimentResult",
    "run_experiment",
    "DISTANCE_BINS",
]

DISTANCE_BINS = ("0", "1", "2", "3", "4", "5", ">=6")


@dataclass(frozen=True)
class MethodSpec:
    name: str
    dissimilarity: str
    statistic: str


METHODS = {
    "GI0": MethodSpec("GI0", "delta0", "gini"),
    "RI0": MethodSpec("RI0", "delta0", "rand"),
    "GI1": MethodSpec("GI1", "delta1", "gini"),
    "RI1": MethodSpec("RI1", "delta1", "rand"),
    "GIE": MethodSpec("GIE", "euclidean", "gini"),
    "RIE": MethodSpec("RIE", "euclidean", "rand"),
    "GI1-block": MethodSpec("GI1-block", "delta1-block", "gini"),
    "RI1-block": MethodSpec("RI1-block", "delta1-block", "rand"),
}


def resolve_method(method: str | MethodSpec) -> MethodSpec:
    if isinstance(method, MethodSpec):
        return method
    try:
        return METHODS[method]
    except KeyError:
        raise BadParameter(f"unknown method {method!r}; known: {', '.join(METHODS)}") from None


def resolve_dissimilarity(name: str, data: DataSequence, block_size: int = 2) -> DissimilaritySpec:
    """Preset by name; the block preset pairs coordinates of ``data``."""
    if name == "delta1-block":
        return preset(name, form_blocks(data, block_size))
    return preset(name)


def analyze(data: DataSequence, dissimilarity: str = "delta0", statistic: str = "gini",
            mode: str = "single", alpha: float = 0.05, seed: int = 0, *, impurity: str | None = None,
            min_gap: int = 5, permutations: int | None = None, restarts: int = 20,
            outlier_filter: bool = False, block_size: int = 2, cache=None) -> ChangePointReport:
    """Run one analysis of ``data`` and return its report.

    In ``single`` mode ``statistic`` is ``rand`` or ``gini``; ``impurity``
    replaces Gini by another impurity function.  ``multi`` mode always uses
    window impurities (``impurity``, default Gini).
    """
    cfg = ClusterConfig(restarts=restarts)
    if mode == "single":
        stat = statistic if statistic == "rand" else (impurity or statistic)
        spec = resolve_dissimilarity(dissimilarity, data, block_size)
        kw = dict(cache=cache, permutations=permutations)
        if outlier_filter:
            return robust_single_changepoint_test(data, spec, stat, alpha, cfg, seed, **kw)
        return single_changepoint_test(data, spec, stat, alpha, cfg, seed, **kw)
    if mode == "multi":
        if outlier_filter:
            raise BadParameter("the outlier filter is available in single mode only")
        seg_cfg = SegmentationConfig(alpha=alpha, min_gap=min_gap, kind=impurity or "gini",
                                     **({"permutations": permutations} if permutations else {}))
        factory = None
        spec = preset(dissimilarity) if dissimilarity != "delta1-block" else None
        if dissimilarity == "delta1-block":
            spec = resolve_dissimilarity(dissimilarity, data, block_size)
            factory = lambda sub: resolve_dissimilarity(dissimilarity, sub, block_size)  # noqa: E731
        return segment(data, spec, seg_cfg, seed, cfg, cache, spec_factory=factory)
    raise BadParameter(f"unknown mode {mode!r}")


def derive_seed(*parts: Any) -> int:
    """Stable 63-bit seed from integers and strings."""
    words = [p if isinstance(p, int) else zlib.crc32(str(p).encode()) for p in parts]
    return int(np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass
class ExperimentResult:
    """Per-replication log and frequency table of ``|estimate - truth|``."""

    log: list[dict] = field(default_factory=list)
    table: list[dict] = field(default_factory=list)

    def write(self, table_path=None, log_path=None) -> None:
        if table_path:
            _write_csv(table_path, self.table)
        if log_path:
            _write_csv(log_path, self.log)

    def success_rate(self, scenario: str, method: str, tolerance: int = 0) -> float:
        """Share of replications with one estimate within ``tolerance`` of every truth."""
        rows = [r for r in self.log if r["scenario"] == scenario and r["method"] == method]
        return float(np.mean([r["all_within"][tolerance] for r in rows])) if rows else float("nan")


def _write_csv(path, rows: list[dict]) -> None:
    if not rows:
        return
    keys = [k for k in rows[0] if k != "all_within"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (" ".join(map(str, v)) if isinstance(v, (list, tuple)) else v)
                             for k, v in row.items() if k in keys})


def _one_replication(job: tuple) -> dict:
    scenario, overrides, method_name, rep, master_seed, options = job
    method = resolve_method(method_name)
    data_seed = derive_seed(master_seed, scenario, rep)
    sc = build_scenario(ScenarioSpec(scenario, seed=data_seed, **overrides))
    report = analyze(sc.data, method.dissimilarity, method.statistic,
                     seed=derive_seed(master_seed, scenario, rep, "analysis"), **options)
    est = list(report.changepoints)
    dists = [min((abs(e - t) for e in est), default=None) for t in sc.truth]
    return {
        "scenario": scenario,
        "method": method.name,
        "replication": rep,
        "data_seed": data_seed,
        "truth": list(sc.truth),
        "estimates": est,
        "distances": ["" if x is None else x for x in dists],
        "all_within": {tol: bool(sc.truth) and all(x is not None and x <= tol for x in dists)
                       for tol in range(0, 6)} | {"none": not est},
    }


def run_experiment(scenarios: Iterable[str], methods: Iterable[str], replications: int,
                   master_seed: int = 0, workers: int = 1, scenario_overrides: dict | None = None,
                   **options) -> ExperimentResult:
    """Replicate each scenario/method pair and tabulate the estimation errors.

    ``options`` are passed to :func:`analyze` (e.g. ``mode``, ``alpha``).
    Replications may run in ``workers`` processes; results are ordered by
    scenario, method and replication index regardless.
    """
    if replications < 1:
        raise BadParameter("replications must be positive")
    overrides = scenario_overrides or {}
    jobs = [(s, overrides.get(s, {}), m, r, master_seed, options)
            for s in scenarios for m in methods for r in range(replications)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            log = list(pool.map(_one_replication, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        log = [_one_replication(j) for j in jobs]
    return ExperimentResult(log, _tabulate(log))


def _tabulate(log: list[dict]) -> list[dict]:
    table = []
    groups: dict[tuple, list[dict]] = {}
    for row in log:
        groups.setdefault((row["scenario"], row["method"]), []).append(row)
    for (scenario, method), rows in groups.items():
        truths = rows[0]["truth"]
        detections = sum(bool(r["estimates"]) for r in rows)
        for k, t in enumerate(truths or [None]):
            entry = {"scenario": scenario, "method": method, "truth": "" if t is None else t}
            counts = dict.fromkeys(DISTANCE_BINS, 0)
            if t is not None:
                for r in rows:
                    x = r["distances"][k]
                    if x != "":
                        counts[str(x) if x <= 5 else ">=6"] += 1
            entry.update(counts)
            entry["detected"] = detections
            entry["replications"] = len(rows)
            table.append(entry)
    return table
