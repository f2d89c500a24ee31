from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hdcpd.core import validate_sequence
from hdcpd.dissim import (
    DELTA0,
    DELTA1,
    EUCLIDEAN,
    EXP_DECAY_PAIR,
    BlockPartition,
    DissimilaritySpec,
    TransformPair,
    base_distance,
    consecutive_blocks,
    dissimilarity_matrix,
    distance_correlation,
    distance_correlation_matrix,
    form_blocks,
    pair_coordinates,
    preset,
)
from hdcpd.exceptions import (
    DimensionMismatch,
    InvalidPartition,
    LengthMismatch,
    TooFewPoints,
    UnsupportedBlockSize,
)

LP2 = DissimilaritySpec("rho", TransformPair.lp(2), leave_out_averaging=False)


def brute_delta0(X):
    n = len(X)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                out[i, j] = sum(abs(np.linalg.norm(X[i] - X[k]) - np.linalg.norm(X[j] - X[k]))
                                for k in range(n) if k not in (i, j)) / (n - 2)
    return out


def brute_matching(W):
    """Best total over pairings; with odd size exactly one item stays single."""
    items = list(range(len(W)))

    def rec(rest, single_left):
        if not rest:
            return 0.0
        i, others = rest[0], rest[1:]
        best = -math.inf
        if single_left:
            best = rec(others, False)
        for k, j in enumerate(others):
            best = max(best, W[i][j] + rec(others[:k] + others[k + 1:], single_left))
        return best

    return rec(items, len(items) % 2 == 1)


finite_rows = arrays(np.float64, st.tuples(st.integers(3, 8), st.integers(1, 5)),
                     elements=st.floats(-50, 50, allow_nan=False, width=32))


class TestBaseDistance:
    def test_scaled_l2(self):
        assert base_distance([0, 0], [3, 4], LP2) == pytest.approx(math.sqrt(25 / 2), rel=1e-15)

    @pytest.mark.parametrize("spec", [EUCLIDEAN, LP2, DissimilaritySpec("rho", EXP_DECAY_PAIR, False)])
    def test_identical_points(self, spec):
        x = np.array([1.5, -2.0, 3.0])
        assert base_distance(x, x, spec) == 0.0

    def test_block_formula(self):
        part = BlockPartition.from_blocks([(0, 1), (2, 3)], 4)
        spec = DissimilaritySpec("rho_block", TransformPair(), False, part)
        assert base_distance([0, 0, 3, 4], [1, 1, 3, 4], spec) == pytest.approx(1.0)

    def test_exp_decay(self):
        spec = DissimilaritySpec("rho", EXP_DECAY_PAIR, False)
        assert base_distance([0.0], [1.0], spec) == pytest.approx(1 - math.exp(-1), abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            base_distance([0, 0], [0, 0, 0], EUCLIDEAN)


class TestTransforms:
    @pytest.mark.parametrize("pair", [
        TransformPair(),
        EXP_DECAY_PAIR,
        TransformPair.lp(1),
        TransformPair.lp(3),
        TransformPair(psi="power", h="root", psi_exponent=0.5, h_exponent=0.25),
    ])
    def test_zero_and_monotone(self, pair):
        grid = np.sort(np.random.default_rng(0).exponential(3.0, 500))
        assert pair.apply_psi(0.0) == 0.0 and pair.apply_h(0.0) == 0.0
        assert np.all(np.diff(pair.apply_psi(grid)) >= 0)
        assert np.all(np.diff(pair.apply_h(grid)) >= 0)

    def test_rejects_unknown(self):
        with pytest.raises(ValueError):
            TransformPair(psi="cube")
        with pytest.raises(ValueError):
            TransformPair(h="root", h_exponent=2.0)


class TestMatrix:
    def test_three_points(self):
        D = dissimilarity_matrix(validate_sequence([0.0, 1.0, 3.0]), DELTA0).entries
        np.testing.assert_allclose(D, [[0, 1, 1], [1, 0, 2], [1, 2, 0]])

    def test_two_term_average(self):
        D = dissimilarity_matrix(validate_sequence([0.0, 1.0, 2.0, 10.0]), DELTA0).entries
        assert D[0, 1] == 1.0

    def test_raw_matrix_matches_base_distance(self, rng):
        X = rng.normal(size=(6, 4))
        D = dissimilarity_matrix(validate_sequence(X), EUCLIDEAN).entries
        assert D[1, 4] == pytest.approx(base_distance(X[1], X[4], EUCLIDEAN), rel=1e-14)

    def test_too_few_points(self):
        with pytest.raises(TooFewPoints):
            dissimilarity_matrix(validate_sequence([[0.0], [1.0]]), DELTA0)

    def test_matches_brute_force(self, rng):
        X = rng.normal(size=(9, 5))
        D = dissimilarity_matrix(validate_sequence(X), DELTA0).entries
        np.testing.assert_allclose(D, brute_delta0(X), rtol=1e-12, atol=1e-12)

    @given(finite_rows)
    def test_delta0_pseudometric(self, X):
        D = dissimilarity_matrix(validate_sequence(X), DELTA0).entries
        assert np.all(D >= 0)
        assert np.array_equal(D, D.T)
        assert np.all(np.diag(D) == 0)
        scale = max(1.0, D.max())
        viol = D[:, None, :] - D[:, :, None] - D.T[None, :, :]
        assert viol.max() <= 1e-9 * scale

    @given(finite_rows)
    def test_delta1_nonnegative_symmetric(self, X):
        D = dissimilarity_matrix(validate_sequence(X), DELTA1).entries
        assert np.all(D >= 0) and np.array_equal(D, D.T)

    def test_scaled_l2_is_scaled_delta0(self, rng):
        X = rng.normal(size=(12, 30))
        spec = DissimilaritySpec("rho", TransformPair.lp(2), True)
        A = dissimilarity_matrix(validate_sequence(X), spec).entries
        B = dissimilarity_matrix(validate_sequence(X), DELTA0).entries / math.sqrt(30)
        np.testing.assert_allclose(A, B, rtol=1e-12, atol=1e-15)

    @pytest.mark.parametrize("pair", [EXP_DECAY_PAIR, TransformPair(), TransformPair.lp(3)])
    def test_singleton_blocks_equal_unblocked(self, rng, pair):
        X = validate_sequence(rng.normal(size=(10, 7)))
        singles = BlockPartition.from_blocks([(i,) for i in range(7)], 7)
        A = dissimilarity_matrix(X, DissimilaritySpec("rho_block", pair, True, singles)).entries
        B = dissimilarity_matrix(X, DissimilaritySpec("rho", pair, True)).entries
        assert np.array_equal(A, B)

    def test_orthogonal_invariance(self, rng):
        X = rng.normal(size=(10, 6))
        Q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
        A = dissimilarity_matrix(validate_sequence(X), DELTA0).entries
        B = dissimilarity_matrix(validate_sequence(X @ Q.T), DELTA0).entries
        np.testing.assert_allclose(A, B, atol=1e-9)

    def test_partition_dimension_checked(self, rng):
        part = consecutive_blocks(4)
        spec = preset("delta1-block", part)
        with pytest.raises(DimensionMismatch):
            dissimilarity_matrix(validate_sequence(rng.normal(size=(5, 6))), spec)


class TestDistanceCorrelation:
    def test_self_is_one(self):
        assert distance_correlation([1, 2, 3, 4, 5], [1, 2, 3, 4, 5]) == pytest.approx(1.0)

    def test_constant_is_zero(self):
        assert distance_correlation([1, 2, 3], [7, 7, 7]) == 0.0

    def test_frozen_value(self):
        # independent double-centering evaluation
        assert distance_correlation([0, 1, 2, 3], [0, 1, 4, 9]) == pytest.approx(0.9684641640120555, rel=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            distance_correlation([1, 2, 3], [1, 2])

    def test_matrix_matches_pairwise(self, rng):
        X = rng.normal(size=(25, 6))
        X[:, 5] = 1.0
        M = distance_correlation_matrix(X)
        for i in range(6):
            for j in range(6):
                expected = distance_correlation(X[:, i], X[:, j]) if i != j else float(i != 5)
                assert M[i, j] == pytest.approx(expected, abs=1e-12)


class TestBlocks:
    W4 = np.array([
        [0, 0.9, 0.5, 0.1],
        [0.9, 0, 0.2, 0.3],
        [0.5, 0.2, 0, 0.8],
        [0.1, 0.3, 0.8, 0],
    ])

    def test_four_coordinates(self):
        total, blocks, method = pair_coordinates(self.W4)
        assert sorted(blocks) == [(0, 1), (2, 3)]
        assert total == pytest.approx(1.7)
        assert method == "exact"

    def test_three_coordinates_leftover(self):
        W = np.array([[0, 0.9, 0.1], [0.9, 0, 0.2], [0.1, 0.2, 0]])
        _, blocks, _ = pair_coordinates(W)
        assert sorted(blocks) == [(0, 1), (2,)]

    @pytest.mark.parametrize("d", [2, 3, 4, 5, 6, 7, 8])
    def test_exact_matches_brute_force(self, d):
        gen = np.random.default_rng(d)
        for _ in range(5):
            W = gen.random((d, d))
            W = np.triu(W, 1) + np.triu(W, 1).T
            total, blocks, _ = pair_coordinates(W)
            assert total == pytest.approx(brute_matching(W), abs=1e-12)
            assert sum(len(b) for b in blocks) == d

    def test_greedy_beyond_limit(self, rng):
        W = rng.random((20, 20))
        W = np.triu(W, 1) + np.triu(W, 1).T
        total, blocks, method = pair_coordinates(W)
        assert method == "greedy"
        assert sorted(i for b in blocks for i in b) == list(range(20))

    def test_form_blocks_finds_dependent_pairs(self, rng):
        z = rng.normal(size=(200, 2))
        X = np.column_stack([z[:, 0], z[:, 1], z[:, 1] ** 2 + 0.1 * rng.normal(size=200),
                             z[:, 0] + 0.1 * rng.normal(size=200)])
        part = form_blocks(validate_sequence(X))
        assert part.blocks == ((0, 3), (1, 2))
        assert part.matching == "exact"

    def test_two_coordinates(self, rng):
        assert form_blocks(rng.normal(size=(10, 2))).blocks == ((0, 1),)

    def test_unsupported_block_size(self, rng):
        with pytest.raises(UnsupportedBlockSize):
            form_blocks(rng.normal(size=(10, 4)), block_size=3)

    def test_partition_validation(self):
        with pytest.raises(InvalidPartition):
            BlockPartition.from_blocks([(0, 1), (1, 2)], 3)
        with pytest.raises(InvalidPartition):
            DissimilaritySpec("rho_block")
