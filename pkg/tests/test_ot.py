import itertools
import math

import numpy as np
import pytest

from timeblind.model import equal_spikes, make_model, term_one
from timeblind.ot import cost_matrix, coupling_cost_stats, pair_minibatch, solve_assignment


def brute_force(cost):
    n = cost.shape[0]
    return min(sum(cost[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))


class TestCostMatrix:
    def test_same_batch_zero_diagonal(self):
        a = np.random.default_rng(0).standard_normal((5, 3))
        c = cost_matrix(a, a)
        np.testing.assert_array_equal(np.diag(c), np.zeros(5))
        np.testing.assert_allclose(c, c.T, atol=1e-12)

    def test_one_dimensional(self):
        np.testing.assert_array_equal(cost_matrix(np.array([[0.0]]), np.array([[3.0]])), [[9.0]])

    def test_naive_loop(self):
        rng = np.random.default_rng(1)
        e, x = rng.standard_normal((8, 16)), rng.standard_normal((8, 16))
        c = cost_matrix(e, x)
        for i in range(8):
            for j in range(8):
                assert abs(c[i, j] - sum((e[i, m] - x[j, m]) ** 2 for m in range(16))) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            cost_matrix(np.zeros((3, 2)), np.zeros((3, 4)))
        with pytest.raises(ValueError):
            cost_matrix(np.zeros((3, 2)), np.zeros((4, 2)))


class TestSolveAssignment:
    def test_examples(self):
        r = solve_assignment(np.array([[1.0, 2.0], [2.0, 1.0]]))
        assert list(r.permutation) == [0, 1] and r.total_cost == 2.0
        r = solve_assignment(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert list(r.permutation) == [0, 1] and r.total_cost == 0.0

    def test_non_finite(self):
        with pytest.raises(ValueError):
            solve_assignment(np.array([[0.0, np.inf], [1.0, 0.0]]))
        with pytest.raises(ValueError):
            solve_assignment(np.array([[np.nan]]))

    @pytest.mark.parametrize("B", range(1, 8))
    def test_brute_force(self, B):
        rng = np.random.default_rng(100 + B)
        for _ in range(100):
            cost = rng.uniform(0, 10, (B, B))
            r = solve_assignment(cost)
            perm = r.permutation
            assert sorted(perm) == list(range(B))
            exact = 0.0
            for i in range(B):
                exact += cost[i, perm[i]]
            assert r.total_cost == exact
            assert r.total_cost <= math.fsum(np.diag(cost)) + 1e-12
            assert abs(r.total_cost - brute_force(cost)) < 1e-9

    def test_integer_ties_are_deterministic(self):
        cost = np.ones((5, 5))
        a, b = solve_assignment(cost), solve_assignment(cost.copy())
        assert list(a.permutation) == list(b.permutation)
        assert a.total_cost == 5.0


class TestPairMinibatch:
    def test_single(self):
        x = np.array([[1.0, 2.0]])
        out, r = pair_minibatch(np.array([[5.0, 5.0]]), x)
        np.testing.assert_array_equal(out, x)

    def test_one_dimensional_is_sorted_matching(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            B = int(rng.integers(2, 40))
            e, x = rng.standard_normal((B, 1)), rng.standard_normal((B, 1)) * 2 + 1
            _, r = pair_minibatch(e, x)
            expected = np.empty(B, dtype=np.int64)
            expected[np.argsort(e[:, 0])] = np.argsort(x[:, 0])
            np.testing.assert_array_equal(r.permutation, expected)

    def test_spiked_batch_beats_identity(self):
        m = equal_spikes(32, 4, 10.0, 0.1)
        rng = np.random.default_rng(8)
        e, x = rng.standard_normal((64, 32)), m.sample_data(64, rng)
        out, r = pair_minibatch(e, x)
        assert r.total_cost < np.sum((e - x) ** 2)
        np.testing.assert_array_equal(np.sort(out, axis=0), np.sort(x, axis=0))
        np.testing.assert_array_equal(out, x[r.permutation])


class TestCouplingCostStats:
    def test_independent_matches_term_one(self):
        m = make_model(16, 4, np.full(4, 9.9), 0.1)
        s = coupling_cost_stats(m, "independent", 64, 500, seed=1)
        assert abs(s.mean_pair_cost - term_one(m)) < 3 * s.std_error
        assert s.mean_pair_cost >= 0 and s.mode == "independent"

    def test_ot_lowers_cost(self):
        m = make_model(16, 4, np.full(4, 9.9), 0.1)
        ind = coupling_cost_stats(m, "independent", 64, 200, seed=2)
        ot = coupling_cost_stats(m, "minibatch_ot", 64, 200, seed=2)
        assert ind.mean_pair_cost - ot.mean_pair_cost > 3 * math.hypot(ind.std_error, ot.std_error)

    def test_batch_of_one(self):
        m = make_model(16, 4, np.full(4, 9.9), 0.1)
        a = coupling_cost_stats(m, "independent", 1, 300, seed=3)
        b = coupling_cost_stats(m, "minibatch_ot", 1, 300, seed=3)
        assert a.mean_pair_cost == b.mean_pair_cost

    def test_monotone_in_batch_size(self):
        m = make_model(16, 4, np.full(4, 9.9), 0.1)
        s = {B: coupling_cost_stats(m, "minibatch_ot", B, 500, seed=4) for B in (1, 8, 64)}
        for small, big in ((1, 8), (8, 64)):
            gap = s[small].mean_pair_cost - s[big].mean_pair_cost
            assert gap > 3 * math.hypot(s[small].std_error, s[big].std_error)

    def test_rejects_bad_args(self):
        m = make_model(4, 1, [1.0], 0.1)
        with pytest.raises(ValueError):
            coupling_cost_stats(m, "sinkhorn", 4, 4)
        with pytest.raises(ValueError):
            coupling_cost_stats(m, "independent", 0, 4)
