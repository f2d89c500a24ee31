from __future__ import annotations


import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial.distance import cdist

from hdcpd.cluster import ClusterConfig, initial_labelings, objective_lambda, point_to_cluster, two_means
from hdcpd.core import Labeling
from hdcpd.exceptions import BadParameter, DegenerateInput, EmptyCluster


def euclid(X):
    X = np.asarray(X, dtype=float).reshape(len(X), -1)
    return cdist(X, X)


def brute_min(D):
    n = len(D)
    best = np.inf
    for bits in range(1, 2 ** (n - 1)):
        lab = np.array([(bits >> k) & 1 for k in range(n)])
        best = min(best, objective_lambda(D, lab))
    return best


class TestObjective:
    def test_two_points_one_cluster_centroid_form(self):
        D = euclid([0.0, 2.0, 100.0])
        assert objective_lambda(D, [0, 0, 1]) == pytest.approx(2.0)

    def test_zero_matrix(self):
        assert objective_lambda(np.zeros((5, 5)), [0, 1, 0, 1, 1]) == 0.0

    def test_block_matrix_minimum(self):
        D = np.full((4, 4), 10.0)
        np.fill_diagonal(D, 0.0)
        D[0, 1] = D[1, 0] = D[2, 3] = D[3, 2] = 1.0
        assert objective_lambda(D, [0, 0, 1, 1]) == pytest.approx(1.0)
        assert brute_min(D) == pytest.approx(1.0)

    def test_empty_cluster(self):
        with pytest.raises(EmptyCluster):
            objective_lambda(np.zeros((3, 3)), [0, 0, 0])

    @given(arrays(np.float64, (7, 3), elements=st.floats(-10, 10, allow_nan=False)),
           st.lists(st.integers(0, 1), min_size=7, max_size=7).filter(lambda v: 0 < sum(v) < 7))
    def test_matches_centroid_sum_of_squares(self, X, lab):
        lab = np.array(lab)
        expected = sum(((X[lab == c] - X[lab == c].mean(axis=0)) ** 2).sum() for c in (0, 1))
        assert objective_lambda(euclid(X), lab) == pytest.approx(expected, rel=1e-9, abs=1e-9)


class TestPointToCluster:
    def test_arithmetic(self):
        D = np.array([[0, 2, 1], [2, 0, 3], [1, 3, 0]], dtype=float)
        assert point_to_cluster(D, 2, [0, 1]) == pytest.approx(4.0)

    def test_centroid_identity(self):
        D = euclid([0.0, 2.0, 3.0])
        assert point_to_cluster(D, 2, [0, 1]) == pytest.approx(4.0)

    def test_singleton(self):
        D = euclid([0.0, 5.0])
        assert point_to_cluster(D, 0, [1]) == pytest.approx(25.0)

    def test_self_inclusion(self, rng):
        X = rng.normal(size=(15, 4))
        D = euclid(X)
        members = np.arange(8)
        centroid = X[members].mean(axis=0)
        for i in range(8):
            assert point_to_cluster(D, i, members) == pytest.approx(
                float(np.sum((X[i] - centroid) ** 2)), rel=1e-9, abs=1e-9)

    def test_empty(self):
        with pytest.raises(EmptyCluster):
            point_to_cluster(np.zeros((2, 2)), 0, [])


class TestTwoMeans:
    def test_separated_pairs(self):
        res = two_means(euclid([0, 0.1, 10, 10.1]))
        assert str(res.labeling) == "0011"
        assert res.objective == pytest.approx(0.01)

    def test_two_points(self):
        res = two_means(euclid([1.0, 4.0]))
        assert str(res.labeling) == "01"
        assert res.objective == 0.0

    def test_identical_points(self):
        res = two_means(np.zeros((6, 6)))
        assert res.objective == 0.0
        assert 1 <= int(res.labeling.labels.sum()) <= 5

    def test_one_point(self):
        with pytest.raises(DegenerateInput):
            two_means(np.zeros((1, 1)))

    def test_config_validation(self):
        with pytest.raises(BadParameter):
            ClusterConfig(max_iterations=0)
        with pytest.raises(BadParameter):
            ClusterConfig(restarts=0, include_split_inits=False)

    def test_first_point_in_cluster_zero(self, rng):
        for _ in range(10):
            res = two_means(euclid(rng.normal(size=(9, 2))))
            assert res.labeling.labels[0] == 0

    def test_objective_consistent(self, rng):
        D = euclid(rng.normal(size=(12, 3)))
        res = two_means(D)
        assert res.objective == pytest.approx(objective_lambda(D, res.labeling), rel=1e-9)

    def test_not_worse_than_any_start(self, rng):
        D = euclid(rng.normal(size=(10, 2)))
        cfg = ClusterConfig(restarts=5)
        res = two_means(D, cfg)
        for row in initial_labelings(10, cfg):
            assert res.objective <= objective_lambda(D, row) + 1e-12

    def test_deterministic(self, rng):
        D = euclid(rng.normal(size=(11, 3)))
        a, b = two_means(D, ClusterConfig(rng_seed=7)), two_means(D, ClusterConfig(rng_seed=7))
        assert str(a.labeling) == str(b.labeling) and a.init_id == b.init_id

    def test_brute_force_agreement(self):
        gen = np.random.default_rng(12345)
        hits = 0
        for _ in range(200):
            n = int(gen.integers(4, 13))
            X = gen.normal(size=(n, int(gen.integers(1, 4))))
            D = euclid(X)
            hits += two_means(D).objective <= brute_min(D) * (1 + 1e-9) + 1e-12
        # measured 200/200 with the default configuration
        assert hits >= 190

    def test_permutation_equivariance(self):
        gen = np.random.default_rng(99)
        same = 0
        for _ in range(40):
            X = gen.normal(size=(10, 2))
            perm = gen.permutation(10)
            a = two_means(euclid(X)).labeling.labels
            b = two_means(euclid(X[perm])).labeling.labels
            back = np.empty(10, dtype=int)
            back[perm] = b
            same += Labeling.from_labels(back).canonical().labels.tolist() == a.tolist()
        assert same >= 38


def test_initial_labelings_layout():
    rows = initial_labelings(5, ClusterConfig(restarts=3))
    assert rows.shape == (7, 5)
    assert rows[0].tolist() == [0, 1, 1, 1, 1]
    assert rows[3].tolist() == [0, 0, 0, 0, 1]
    assert all(r.sum() == 3 for r in rows[4:])


@pytest.mark.parametrize("n", [3, 5, 8])
def test_every_bipartition_candidate_reachable(n):
    # from any temporal split the result is a local optimum no worse than the start
    D = euclid(np.arange(n, dtype=float) ** 1.5)
    res = two_means(D, ClusterConfig(restarts=0))
    for t in range(1, n):
        lab = [0] * t + [1] * (n - t)
        assert res.objective <= objective_lambda(D, lab) + 1e-12
    assert res.objective == pytest.approx(brute_min(D))
