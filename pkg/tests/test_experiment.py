from __future__ import annotations

import pytest

from hdcpd.datagen import ScenarioSpec, build_scenario
from hdcpd.exceptions import BadParameter
from hdcpd.experiment import METHODS, analyze, derive_seed, resolve_method, run_experiment
from hdcpd.nulldist import NullCache


def test_single_replication_matches_run():
    res = run_experiment(["A"], ["GI0"], 1, master_seed=5, cache=NullCache())
    (row,) = res.log
    sc = build_scenario(ScenarioSpec("A", seed=derive_seed(5, "A", 0)))
    rep = analyze(sc.data, "delta0", "gini", seed=derive_seed(5, "A", 0, "analysis"), cache=NullCache())
    assert row["estimates"] == rep.changepoints
    assert row["truth"] == [20]


def test_same_seed_same_table():
    a = run_experiment(["C"], ["GI0", "GIE"], 3, master_seed=11, cache=NullCache())
    b = run_experiment(["C"], ["GI0", "GIE"], 3, master_seed=11, cache=NullCache())
    assert a.table == b.table and a.log == b.log


def test_methods_share_data():
    res = run_experiment(["A"], ["GI0", "RI0"], 2, master_seed=1, cache=NullCache())
    seeds = {(r["method"], r["replication"]): r["data_seed"] for r in res.log}
    assert seeds[("GI0", 0)] == seeds[("RI0", 0)] and seeds[("GI0", 1)] == seeds[("RI0", 1)]


def test_table_counts():
    res = run_experiment(["Ex8"], ["GI0"], 2, master_seed=0, mode="multi", cache=NullCache())
    assert len(res.table) == 3
    for entry in res.table:
        binned = sum(entry[k] for k in ("0", "1", "2", "3", "4", "5", ">=6"))
        assert binned <= entry["replications"] == 2
    assert 0 <= res.success_rate("Ex8", "GI0", 2) <= 1


def test_null_scenario_row():
    res = run_experiment(["H0"], ["GI0"], 2, master_seed=0, scenario_overrides={"H0": {"d": 20}},
                         cache=NullCache())
    assert res.table[0]["truth"] == "" and res.table[0]["replications"] == 2


def test_bad_inputs():
    with pytest.raises(BadParameter):
        resolve_method("XX")
    with pytest.raises(BadParameter):
        run_experiment(["A"], ["GI0"], 0)
    with pytest.raises(BadParameter):
        analyze(build_scenario("A").data, mode="triple")


@pytest.mark.parametrize("name", sorted(METHODS))
def test_every_method_runs(name):
    sc = build_scenario(ScenarioSpec("A", d=12, seed=2))
    m = METHODS[name]
    rep = analyze(sc.data, m.dissimilarity, m.statistic, seed=1, cache=NullCache())
    assert rep.metadata["n"] == 40


def test_derive_seed_stable():
    assert derive_seed(1, "A", 0) == derive_seed(1, "A", 0)
    assert derive_seed(1, "A", 0) != derive_seed(1, "A", 1)
    assert 0 <= derive_seed(7, "x") < 2 ** 63
