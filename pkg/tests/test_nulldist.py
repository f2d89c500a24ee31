from __future__ import annotations

import json
from math import comb

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hdcpd.exceptions import BadParameter, TooLarge
from hdcpd.nulldist import (
    NullCache,
    NullDistribution,
    decide,
    default_cache,
    exact_null,
    monte_carlo_null,
    null_distribution,
    randomized_threshold,
    rejection_probability,
    resolve_statistic,
)
from hdcpd.singlecp import minimize_statistic


def law(support, probs):
    return NullDistribution("gini_min", 2, 2, np.array(support, float), np.array(probs, float), "exact")


def as_dict(dist):
    return dict(zip(dist.support.tolist(), dist.probs.tolist()))


class TestExact:
    def test_two_by_two_gini(self):
        d = exact_null(2, 2, "gini_min")
        assert d.support.tolist() == pytest.approx([0.0, 1 / 3])
        assert d.probs.tolist() == pytest.approx([2 / 6, 4 / 6], abs=1e-15)

    def test_degenerate(self):
        d = exact_null(5, 0, "gini_min")
        assert d.probs.tolist() == [1.0]

    @pytest.mark.parametrize("stat", ["gini_min", "rand_min"])
    @pytest.mark.parametrize("n", range(2, 13))
    def test_zero_mass(self, stat, n):
        for tau in range(1, n):
            d = exact_null(tau, n - tau, stat)
            assert d.prob_of(0.0) == pytest.approx(2 / comb(n, tau), rel=1e-12)

    @pytest.mark.parametrize("stat", ["gini_min", "rand_min", "entropy_min", "misclassification_min"])
    def test_law_invariants(self, stat):
        d = exact_null(6, 5, stat)
        assert abs(d.probs.sum() - 1) <= 1e-12
        assert np.all(np.diff(d.support) > 0)

    def test_matches_direct_enumeration(self):
        import itertools
        values = []
        for ones in itertools.combinations(range(7), 3):
            lab = np.zeros(7, int)
            lab[list(ones)] = 1
            values.append(minimize_statistic(lab, "gini").min_value)
        support, counts = np.unique(np.round(values, 12), return_counts=True)
        d = exact_null(4, 3, "gini_min")
        np.testing.assert_allclose(d.support, support, atol=1e-12)
        np.testing.assert_allclose(d.probs, counts / counts.sum(), rtol=1e-12)

    def test_too_large(self):
        with pytest.raises(TooLarge):
            exact_null(20, 20, "gini_min")

    def test_unknown_statistic(self):
        with pytest.raises(BadParameter):
            resolve_statistic("median_min")

    @pytest.mark.parametrize("stat", ["gini_min", "rand_min"])
    @pytest.mark.parametrize("n1,n2", [(1, 4), (3, 5), (2, 8), (4, 6)])
    def test_swap_symmetry(self, stat, n1, n2):
        a, b = exact_null(n1, n2, stat), exact_null(n2, n1, stat)
        assert np.array_equal(a.support, b.support) and np.array_equal(a.probs, b.probs)

    @pytest.mark.parametrize("stat", ["gini_min", "rand_min"])
    def test_color_permutation(self, stat):
        s = resolve_statistic(stat)
        gen = np.random.default_rng(3)
        batch = (gen.random((200, 9)) < 0.5).astype(np.int8)
        batch[:, 0], batch[:, 1] = 0, 1
        np.testing.assert_array_equal(s(batch), s(1 - batch))


class TestMonteCarlo:
    def test_single_draw(self):
        d = monte_carlo_null(2, 2, "gini_min", M=1, seed=1)
        assert d.probs.tolist() == [1.0]

    def test_close_to_exact(self):
        d = monte_carlo_null(2, 2, "gini_min", M=100_000, seed=5)
        assert abs(d.prob_of(0.0) - 1 / 3) <= 0.01

    def test_deterministic(self):
        a = monte_carlo_null(6, 5, "rand_min", M=5000, seed=11)
        b = monte_carlo_null(6, 5, "rand_min", M=5000, seed=11)
        assert np.array_equal(a.support, b.support) and np.array_equal(a.probs, b.probs)

    def test_total_variation_shrinks(self):
        exact = as_dict(exact_null(5, 5, "gini_min"))
        tv = []
        for M in (1_000, 10_000, 100_000):
            mc = as_dict(monte_carlo_null(5, 5, "gini_min", M=M, seed=2))
            keys = set(exact) | set(mc)
            tv.append(0.5 * sum(abs(exact.get(k, 0) - mc.get(k, 0)) for k in keys))
        assert tv[0] > tv[1] > tv[2]

    def test_bad_m(self):
        with pytest.raises(BadParameter):
            monte_carlo_null(2, 2, "gini_min", M=0)

    def test_auto_switches(self):
        assert null_distribution(3, 3, "gini_min").method == "exact"
        d = null_distribution(3, 3, "gini_min", cap=10, M=500)
        assert d.method == "monte_carlo" and d.M == 500


class TestThreshold:
    def test_first_atom(self):
        th = randomized_threshold(law([0, 1 / 3], [1 / 3, 2 / 3]), 0.05)
        assert th.r_alpha == 0 and th.gamma == pytest.approx(0.15)

    def test_second_atom(self):
        th = randomized_threshold(law([0, 1], [0.03, 0.97]), 0.05)
        assert th.r_alpha == 1 and th.gamma == pytest.approx(0.02 / 0.97, rel=1e-12)

    def test_single_atom(self):
        th = randomized_threshold(law([0], [1]), 0.05)
        assert th.r_alpha == 0 and th.gamma == pytest.approx(0.05)

    def test_bad_alpha(self):
        with pytest.raises(BadParameter):
            randomized_threshold(law([0], [1]), 1.0)

    @pytest.mark.parametrize("stat", ["gini_min", "rand_min", "entropy_min", "misclassification_min"])
    @pytest.mark.parametrize("n1,n2", [(3, 3), (5, 4), (7, 7), (2, 9)])
    @pytest.mark.parametrize("alpha", [0.01, 0.05, 0.1, 0.3])
    def test_exact_size(self, stat, n1, n2, alpha):
        d = exact_null(n1, n2, stat)
        th = randomized_threshold(d, alpha)
        assert 0 <= th.gamma < 1
        assert rejection_probability(d, th) == pytest.approx(alpha, abs=1e-12)

    @given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=8), st.floats(0.001, 0.999))
    def test_size_identity_random_laws(self, weights, alpha):
        p = np.array(weights) / sum(weights)
        d = law(np.arange(len(p), dtype=float), p)
        th = randomized_threshold(d, alpha)
        assert 0 <= th.gamma < 1
        if d.cdf_below()[-1] <= alpha:
            # alpha beyond the last jump: the top atom absorbs what it can
            assert th.r_alpha == len(p) - 1
        else:
            assert rejection_probability(d, th) == pytest.approx(alpha, abs=1e-12)


class TestDecide:
    d = law([0, 1 / 3], [1 / 3, 2 / 3])

    def test_below_support(self):
        dec = decide(self.d, 0.05, -1.0, 0.9)
        assert dec.reject and dec.p_value == 0.0

    def test_boundary_coin(self):
        assert decide(self.d, 0.05, 0.0, 0.0).reject
        assert not decide(self.d, 0.05, 0.0, 0.5).reject

    def test_above_threshold(self):
        dec = decide(self.d, 0.05, 1 / 3, 0.0)
        assert not dec.reject and dec.p_value == pytest.approx(1.0)

    def test_coin_range(self):
        with pytest.raises(BadParameter):
            decide(self.d, 0.05, 0.0, 1.0)


class TestCache:
    def test_hit_counter(self, tmp_path):
        cache = NullCache(tmp_path)
        a = cache.get_or_compute("gini_min", 4, 4, 0.05)
        b = cache.get_or_compute("gini_min", 4, 4, 0.05)
        assert cache.computations == 1 and a[1] == b[1]
        fresh = NullCache(tmp_path)
        c = fresh.get_or_compute("gini_min", 4, 4, 0.05)
        assert fresh.computations == 0 and c[1] == a[1]
        assert np.array_equal(c[0].probs, a[0].probs)

    def test_swapped_counts_share_entry(self, tmp_path):
        cache = NullCache(tmp_path)
        cache.get_or_compute("rand_min", 3, 6, 0.05)
        cache.get_or_compute("rand_min", 6, 3, 0.05)
        assert cache.computations == 1

    def test_corrupt_file(self, tmp_path):
        NullCache(tmp_path).get_or_compute("gini_min", 4, 3, 0.05)
        (path,) = tmp_path.glob("*.json")
        path.write_text("{not json")
        cache = NullCache(tmp_path)
        _, th = cache.get_or_compute("gini_min", 4, 3, 0.05)
        assert cache.computations == 1
        assert json.loads(path.read_text())["r_alpha"] == th.r_alpha

    def test_unknown_version(self, tmp_path):
        NullCache(tmp_path).get_or_compute("gini_min", 4, 3, 0.05)
        (path,) = tmp_path.glob("*.json")
        doc = json.loads(path.read_text())
        doc["version"] = 999
        path.write_text(json.dumps(doc))
        cache = NullCache(tmp_path)
        cache.get_or_compute("gini_min", 4, 3, 0.05)
        assert cache.computations == 1
        assert json.loads(path.read_text())["version"] == 1

    def test_file_fields(self, tmp_path):
        NullCache(tmp_path).get_or_compute("gini_min", 30, 30, 0.05, M=1000)
        (path,) = tmp_path.glob("*.json")
        doc = json.loads(path.read_text())
        for key in ("statistic", "n1", "n2", "alpha", "method", "M", "seed", "support", "probs",
                    "r_alpha", "gamma", "version"):
            assert key in doc
        assert doc["method"] == "monte_carlo" and doc["M"] == 1000

    def test_environment_directory(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HDCPD_CACHE_DIR", str(tmp_path))
        assert default_cache().directory == tmp_path
        monkeypatch.delenv("HDCPD_CACHE_DIR")
        assert default_cache().directory is None
