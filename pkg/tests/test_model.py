import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ljsr.model import (PhantomSpec, RankError, SignalMatrix, degrees_of_freedom,
                        dependent_subset, joint_support, make_dynamic_phantom,
                        make_random_lrjs, numerical_rank, spark_bruteforce,
                        truncated_svd)
from ljsr.subspace import projection_error


def spark_naive(A):
    """Reference spark by plain enumeration with matrix_rank."""
    n = A.shape[1]
    for s in range(1, n + 1):
        for c in itertools.combinations(range(n), s):
            if np.linalg.matrix_rank(A[:, c]) < s:
                return s
    return n + 1


class TestRandomLRJS:
    def test_single_row_rank_one(self):
        X = make_random_lrjs(8, 6, 1, 1, seed=0)
        assert np.sum(np.linalg.norm(X.values, axis=1) > 0) == 1
        assert numerical_rank(X.values) == 1

    def test_seeded_instance(self):
        # Oracle: SVD and row norms of the generated matrix give rank 4, 10 rows.
        X = make_random_lrjs(64, 40, 4, 10, seed=7)
        assert numerical_rank(X.values) == 4
        assert np.sum(np.linalg.norm(X.values, axis=1) > 1e-12) == 10
        assert joint_support(X, 1e-9) == set(X.true_support)
        X.check_invariants()

    @pytest.mark.parametrize("n,N,r,k", [(8, 6, 3, 2), (8, 2, 3, 4), (4, 6, 2, 5)])
    def test_infeasible(self, n, N, r, k):
        with pytest.raises(ValueError):
            make_random_lrjs(n, N, r, k, seed=0)

    def test_deterministic(self):
        a = make_random_lrjs(20, 12, 2, 5, seed=3).values
        b = make_random_lrjs(20, 12, 2, 5, seed=3).values
        np.testing.assert_array_equal(a, b)

    def test_factors_orthonormal(self):
        X = make_random_lrjs(30, 10, 3, 6, seed=1)
        U, S, V = X.meta["U"], X.meta["S"], X.meta["V"]
        np.testing.assert_allclose(U.conj().T @ U, np.eye(3), atol=1e-10)
        np.testing.assert_allclose(V @ V.conj().T, np.eye(3), atol=1e-10)
        assert np.all((S >= 1) & (S <= 2)) and np.all(np.diff(S) <= 0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 30), st.integers(1, 12), st.data())
    def test_rank_and_support_property(self, n, N, data):
        k = data.draw(st.integers(1, n))
        r = data.draw(st.integers(1, min(k, N)))
        seed = data.draw(st.integers(0, 10_000))
        X = make_random_lrjs(n, N, r, k, seed)
        assert numerical_rank(X.values) == r
        assert len(joint_support(X, 1e-9)) == k


class TestPhantom:
    def test_period_one_rank_one(self):
        X = make_dynamic_phantom(PhantomSpec(16, 16, 8, 1))
        assert all(np.array_equal(X.values[:, 0], X.values[:, t]) for t in range(8))
        assert X.true_rank == 1

    def test_rank_six_and_periodicity(self, phantom6):
        assert numerical_rank(phantom6.values) == 6
        assert phantom6.true_rank == 6
        for t in range(54):
            assert np.array_equal(phantom6.values[:, t], phantom6.values[:, t + 6])

    def test_gradient_support_small(self, phantom6):
        # Oracle: periodic forward differences over all frames, 236 of 1024.
        F = phantom6.values.reshape(32, 32, 60)
        gx = F - np.roll(F, -1, axis=0)
        gy = F - np.roll(F, -1, axis=1)
        g = np.sqrt((np.abs(gx) ** 2).sum(-1) + (np.abs(gy) ** 2).sum(-1))
        count = int(np.sum(g > 1e-12 * g.max()))
        assert count == 236
        assert count < 1024 // 4

    def test_k_target_increases_support(self):
        spec = PhantomSpec(32, 32, 12, 3, k_target=300)
        X = make_dynamic_phantom(spec)
        F = X.values.reshape(32, 32, 12)
        g = (np.abs(F - np.roll(F, -1, 0)) + np.abs(F - np.roll(F, -1, 1))).sum(-1)
        assert np.sum(g > 1e-12 * g.max()) >= 300
        assert X.meta["n_static"] > 0

    @pytest.mark.parametrize("kw", [dict(period=0), dict(N=3, period=4), dict(nx=3)])
    def test_spec_validation(self, kw):
        with pytest.raises(ValueError):
            PhantomSpec(**kw)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(1, 7), st.integers(0, 3))
    def test_periodicity_property(self, period, extra):
        N = period * 2 + extra
        X = make_dynamic_phantom(PhantomSpec(16, 16, N, period))
        for t in range(N):
            assert np.array_equal(X.values[:, t], X.values[:, t % period])
        assert numerical_rank(X.values) <= period


class TestTruncatedSVD:
    def test_single_column(self):
        A = np.zeros((4, 3))
        A[:, 1] = [3.0, 0.0, 4.0, 0.0]
        f = truncated_svd(A, 1)
        np.testing.assert_allclose(f.S, [5.0])
        np.testing.assert_allclose(f.V, [[0, 1, 0]], atol=1e-15)

    def test_reconstructs(self):
        X = make_random_lrjs(40, 20, 4, 10, seed=2)
        f = truncated_svd(X, 4)
        err = np.linalg.norm(f.reconstruct() - X.values) / np.linalg.norm(X.values)
        assert err <= 1e-10
        np.testing.assert_allclose(f.U.conj().T @ f.U, np.eye(4), atol=1e-10)
        np.testing.assert_allclose(f.V @ f.V.conj().T, np.eye(4), atol=1e-10)
        assert np.all(f.S > 0) and np.all(np.diff(f.S) <= 0)

    def test_rank_too_high(self):
        X = make_random_lrjs(20, 10, 4, 6, seed=0)
        with pytest.raises(RankError):
            truncated_svd(X, 5)

    def test_phase_convention(self):
        X = make_random_lrjs(20, 10, 3, 6, seed=4)
        V = truncated_svd(X, 3).V
        piv = V[np.arange(3), np.argmax(np.abs(V), axis=1)]
        np.testing.assert_allclose(piv.imag, 0, atol=1e-15)
        assert np.all(piv.real > 0)

    def test_idempotent_subspace(self):
        X = make_random_lrjs(20, 10, 3, 6, seed=5)
        f = truncated_svd(X, 3)
        g = truncated_svd(f.reconstruct(), 3)
        assert projection_error(f.V, g.V) <= 1e-10


class TestSpark:
    def test_identity(self):
        assert spark_bruteforce(np.eye(2)) == 3

    def test_duplicate_columns(self):
        A = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        assert spark_bruteforce(A) == 2

    def test_zero_column(self):
        A = np.random.default_rng(0).standard_normal((3, 5))
        A[:, 2] = 0
        assert spark_bruteforce(A) == 1

    def test_gaussian_4x8(self):
        # Oracle: spark_naive on the same draw gives 5 = m + 1.
        rng = np.random.default_rng(123)
        A = rng.standard_normal((4, 8)) + 1j * rng.standard_normal((4, 8))
        assert spark_bruteforce(A) == 5

    def test_size_guard(self):
        with pytest.raises(ValueError):
            spark_bruteforce(np.ones((2, 25)))

    def test_dependent_subset_is_dependent(self):
        rng = np.random.default_rng(1)
        A = rng.standard_normal((5, 7))
        A[:, 4] = A[:, 0] + A[:, 2]
        D = dependent_subset(A)
        assert len(D) == 3
        assert np.linalg.matrix_rank(A[:, list(D)]) < len(D)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 5), st.integers(1, 7), st.integers(0, 3), st.integers(0, 10_000))
    def test_matches_naive_and_rank_bound(self, m, n, dup, seed):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((m, n))
        for _ in range(min(dup, n - 1)):
            i, j = rng.choice(n, 2, replace=False)
            A[:, i] = rng.standard_normal() * A[:, j]
        s = spark_bruteforce(A)
        assert s == spark_naive(A)
        assert s <= np.linalg.matrix_rank(A) + 1


class TestSupportAndDof:
    def test_zero_matrix(self):
        assert joint_support(np.zeros((5, 3)), 0.1) == set()

    def test_tol_zero_dense(self):
        A = np.random.default_rng(0).standard_normal((6, 3))
        assert joint_support(A, 0.0) == set(range(6))

    def test_dof(self):
        assert degrees_of_freedom(1, 1, 1, 1) == 1
        assert degrees_of_freedom(100, 40, 4, 10) == 184
        assert degrees_of_freedom(50, 7, 7, 7) == 49

    def test_dof_preconditions(self):
        with pytest.raises(ValueError):
            degrees_of_freedom(10, 5, 6, 6)
        with pytest.raises(ValueError):
            degrees_of_freedom(4, 5, 2, 5)


class TestSignalMatrix:
    def test_frame_shape_mismatch(self):
        with pytest.raises(ValueError):
            SignalMatrix(np.zeros((10, 2)), frame_shape=(3, 3))

    def test_frame_view(self, phantom6):
        assert phantom6.frame(0).shape == (32, 32)
