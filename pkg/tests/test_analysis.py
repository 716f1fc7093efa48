import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ljsr.analysis import (ambiguous_pair, row_sparse_bruteforce, budget, check_theorem3, mmv_identifiable,
                           proposed_beats_mmv, sparse_bruteforce, spark_x_condition,
                           stacked_operator, subspace_counterexample, BudgetReport)
from ljsr.model import make_dynamic_phantom, make_random_lrjs, PhantomSpec
from ljsr.recovery import BlockSystem, solve_least_squares
from ljsr.sampling import build_common, build_variable_set, measure
from ljsr.subspace import estimate_right_subspace, gram

from conftest import crandn


class TestMMV:
    def test_examples(self):
        assert mmv_identifiable(5, 1, 11)
        assert not mmv_identifiable(5, 5, 6)
        assert mmv_identifiable(1, 1, 3)

    def test_r_above_k(self):
        with pytest.raises(ValueError):
            mmv_identifiable(2, 3, 10)

    @given(st.integers(1, 20), st.data())
    def test_monotone_in_spark(self, k, data):
        r = data.draw(st.integers(1, k))
        s = data.draw(st.integers(1, 50))
        if mmv_identifiable(k, r, s):
            assert mmv_identifiable(k, r, s + 1)


class TestBudget:
    def test_example(self):
        b = budget(10, 2, 100)
        assert b.mmv_per_snapshot == 19 and b.proposed_total == 236
        assert b.proposed_total < 19 * 100
        assert b.common_total + b.variable_total == b.proposed_total
        assert b.proposed_avg_per_snapshot == pytest.approx(2.36)
        assert b.approx_avg_per_snapshot == pytest.approx(2.4)

    def test_square_regime(self):
        assert budget(4, 4, 4).proposed_total == (4 + 4) * 4

    def test_large_N_limit(self):
        b = budget(10, 3, 10**6)
        assert abs(b.proposed_avg_per_snapshot - 3) <= 2 * 10 * 3 / 10**6

    def test_preconditions(self):
        with pytest.raises(ValueError):
            budget(2, 3, 10)
        with pytest.raises(ValueError):
            budget(5, 3, 2)

    def test_text_and_csv(self):
        b = budget(10, 2, 100)
        assert "proposed_total            = 236" in b.as_text()
        head = BudgetReport.csv_header().split(",")
        row = b.csv_row().split(",")
        assert dict(zip(head, row))["mmv_per_snapshot"] == "19"

    @given(st.integers(2, 40), st.data())
    def test_exact_gain_condition(self, k, data):
        r = data.draw(st.integers(1, k - 1))
        N = data.draw(st.integers(r + 1, 400))
        b = budget(k, r, N)
        assert (b.proposed_total < b.mmv_total) == proposed_beats_mmv(k, r, N)
        assert b.proposed_avg_per_snapshot == pytest.approx(r + 2 * k * r / N - r * r / N)
        assert b.dense_dof == r * (k + N - r)

    @given(st.integers(2, 40), st.data())
    def test_gain_when_rank_small(self, k, data):
        r = data.draw(st.integers(1, max(1, k // 2)))
        N = data.draw(st.integers(max(2 * r, r + 1), 400))
        b = budget(k, r, N)
        assert b.proposed_total < b.mmv_per_snapshot * N

    def test_gain_not_universal(self):
        b = budget(6, 5, 6)
        assert b.proposed_total == 65 and b.mmv_total == 48
        assert not proposed_beats_mmv(6, 5, 6)


class TestUniquenessCondition:
    def test_consecutive_random_q(self):
        rng = np.random.default_rng(0)
        Q = crandn(rng, 3, 12)
        cmap = np.arange(12) // 3
        C = crandn(rng, 16, 10)
        res = check_theorem3(C, 4, Q, cmap)
        assert res.q_clusters_ok and res.spark_found == 11 and res.satisfied

    def test_periodic_phantom_periodic_clusters(self):
        X = make_dynamic_phantom(PhantomSpec(16, 16, 24, 4))
        Phi = build_common("dense-gaussian", 8, 256, 0)
        est = estimate_right_subspace(gram(Phi.apply(X.values)), 4)
        cmap = np.arange(24) % 4
        res = check_theorem3(np.eye(6), 2, est, cmap)
        assert not res.q_clusters_ok and not res.satisfied
        for c in range(4):
            cols = est.Q[:, cmap == c]
            np.testing.assert_allclose(cols, cols[:, :1] * np.ones(cols.shape[1]), atol=1e-10)

    def test_duplicated_column(self):
        C = np.eye(5)
        C[:, 4] = C[:, 0]
        res = check_theorem3(C, 1, np.eye(2), [0, 1])
        assert res.spark_found == 2 and not res.satisfied

    def test_oversize(self):
        with pytest.raises(ValueError):
            check_theorem3(np.ones((3, 25)), 1, np.eye(2), [0, 1])

    @staticmethod
    def _instance(seed, n, N, r, k, p, m_v):
        X = make_random_lrjs(n, N, r, k, seed)
        Phi = build_common("dense-gaussian", r + 2, n, seed + 100)
        A = build_variable_set("consecutive", p, N, m_v, n, "dense-gaussian", seed + 200)
        ms = measure(X, Phi, A)
        est = estimate_right_subspace(gram(ms.Z), r)
        P_true = X.values @ np.linalg.pinv(est.Q)
        return A, ms, est, P_true

    @pytest.mark.parametrize("seed", range(6))
    def test_sufficiency_least_squares(self, seed):
        # Enough rows for B to have full column rank: least squares suffices.
        n, N, r, k, p = 10, 6, 2, 3, 3
        A, ms, est, P_true = self._instance(seed, n, N, r, k, p, m_v=7)
        assert check_theorem3(stacked_operator(A), k, est, A.cluster_map).satisfied
        sol = solve_least_squares(BlockSystem(A, est), ms.Y)
        assert sol.unique
        assert np.linalg.norm(sol.P - P_true) / np.linalg.norm(P_true) < 1e-6

    @pytest.mark.parametrize("seed", range(6))
    def test_sufficiency_row_sparse(self, seed):
        # 18 rows for 20 unknowns: least squares cannot pin P down, but P
        # is the only solution with k nonzero rows.
        n, N, r, k, p = 10, 6, 2, 3, 3
        A, ms, est, P_true = self._instance(seed, n, N, r, k, p, m_v=3)
        assert check_theorem3(stacked_operator(A), k, est, A.cluster_map).satisfied
        B = BlockSystem(A, est)
        assert solve_least_squares(B, ms.Y).unique is False
        best, fits = row_sparse_bruteforce(B, ms.Y, k)
        assert len(fits) == 1
        assert np.linalg.norm(best - P_true) / np.linalg.norm(P_true) < 1e-8


class TestSparkX:
    def test_proportional_columns(self):
        X = crandn(np.random.default_rng(0), 6, 5)
        X[:, 3] = 2.5 * X[:, 1]
        assert not spark_x_condition(X, 2)

    def test_generic(self):
        res = spark_x_condition(make_random_lrjs(20, 10, 3, 8, seed=1), 3)
        assert res and res.exhaustive and res.tested == 120

    def test_rank_one(self):
        X = np.ones((3, 4))
        assert spark_x_condition(X, 1)
        X[:, 2] = 0
        assert not spark_x_condition(X, 1)

    def test_sampled_mode(self):
        res = spark_x_condition(make_random_lrjs(20, 30, 2, 5, seed=2), 2, draws=50)
        assert res.holds and not res.exhaustive and res.tested == 50

    def test_r_above_N(self):
        with pytest.raises(ValueError):
            spark_x_condition(np.ones((3, 2)), 3)


class TestBruteforceHelpers:
    def test_unique_when_spark_large(self):
        rng = np.random.default_rng(0)
        M = crandn(rng, 4, 8)
        x = np.zeros(8, complex)
        x[[2, 5]] = [1.0, -2j]
        best, fits = sparse_bruteforce(M, M @ x, 2)
        assert len(fits) == 1
        np.testing.assert_allclose(best, x, atol=1e-10)

    def test_ambiguous_pair(self):
        rng = np.random.default_rng(1)
        M = crandn(rng, 3, 8)
        a, b = ambiguous_pair(M, 2)
        assert np.count_nonzero(a) <= 2 and np.count_nonzero(b) <= 2
        assert np.linalg.norm(a - b) > 0.1
        np.testing.assert_allclose(M @ a, M @ b, atol=1e-10)

    def test_no_pair_when_spark_large(self):
        M = crandn(np.random.default_rng(2), 6, 8)
        assert ambiguous_pair(M, 2) is None

    def test_counterexample_needs_dependency(self):
        Phi = crandn(np.random.default_rng(3), 6, 8)
        assert subspace_counterexample(Phi, 3, 2, 5) is None
