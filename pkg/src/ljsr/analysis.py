"""Identifiability checks and measurement-budget calculators."""

from dataclasses import dataclass, fields
from itertools import combinations

import numpy as np

from .model import (RANK_TOL, SPARK_MAX_COLS, SignalMatrix, complex_normal,
                    dependent_subset, spark_bruteforce)
from .subspace import SubspaceEstimate

__all__ = [
    "BudgetReport",
    "UniquenessCheck",
    "SparkXResult",
    "mmv_identifiable",
    "budget",
    "proposed_beats_mmv",
    "stacked_operator",
    "check_theorem3",
    "spark_x_condition",
    "sparse_bruteforce",
    "row_sparse_bruteforce",
    "ambiguous_pair",
    "subspace_counterexample",
]


def mmv_identifiable(k, r, spark_A):
    """Classical shared-operator condition ``spark(A) > 2k - r + 1``."""
    if r < 1:
        raise ValueError("r must be >= 1")
    if r > k:
        raise ValueError(f"r={r} exceeds k={k}")
    return spark_A > 2 * k - r + 1


@dataclass(frozen=True)
class BudgetReport:
    """Measurement counts for the shared-operator and hybrid schemes.

    The hybrid total ``(2k - r + N) r`` is split as ``r`` common rows per
    frame (``common_total = r N``) plus ``variable_total = r (2k - r)``
    variable rows spread over the frames.
    """

    k: int
    r: int
    N: int
    mmv_per_snapshot: int
    mmv_total: int
    proposed_total: int
    common_total: int
    variable_total: int
    proposed_avg_per_snapshot: float
    approx_avg_per_snapshot: float
    dense_dof: int

    def as_text(self):
        width = max(len(f.name) for f in fields(self))
        return "\n".join(f"{f.name:<{width}} = {getattr(self, f.name)}"
                         for f in fields(self))

    @staticmethod
    def csv_header():
        return ",".join(f.name for f in fields(BudgetReport))

    def csv_row(self):
        return ",".join(repr(getattr(self, f.name)) if isinstance(getattr(self, f.name), float)
                        else str(getattr(self, f.name)) for f in fields(self))


def budget(k, r, N):
    """Measurement budgets for joint sparsity `k`, rank `r` and `N` frames.

    ``proposed_avg_per_snapshot`` is the exact ``r + 2kr/N - r^2/N``;
    ``approx_avg_per_snapshot`` is the usual shorthand ``r + 2kr/N``.
    """
    if not 1 <= r <= k:
        raise ValueError(f"need 1 <= r <= k, got r={r}, k={k}")
    if N < r:
        raise ValueError(f"need N >= r, got N={N}, r={r}")
    total = (2 * k - r + N) * r
    return BudgetReport(
        k=k, r=r, N=N,
        mmv_per_snapshot=2 * k - r + 1,
        mmv_total=(2 * k - r + 1) * N,
        proposed_total=total,
        common_total=r * N,
        variable_total=r * (2 * k - r),
        proposed_avg_per_snapshot=total / N,
        approx_avg_per_snapshot=r + 2 * k * r / N,
        dense_dof=r * (k + N - r),
    )


def proposed_beats_mmv(k, r, N):
    """Whether ``(2k - r + N) r < (2k - r + 1) N``.

    Equivalent to ``(2k - r)(N - r) > N (r - 1)``; it holds for every
    ``r < k`` once ``N`` is large enough, but not for all ``N > r``.
    """
    return (2 * k - r) * (N - r) > N * (r - 1)


def stacked_operator(A):
    """Dense stack ``[C_1; ...; C_p]`` of the distinct cluster operators."""
    return np.vstack([op.to_dense() for op in A.clusters])


@dataclass(frozen=True)
class UniquenessCheck:
    satisfied: bool
    spark_found: int
    q_clusters_ok: bool


def _full_row_rank(M, tol=RANK_TOL):
    if M.shape[1] < M.shape[0]:
        return False
    s = np.linalg.svd(M, compute_uv=False)
    return bool(s[0] > 0 and s[-1] > tol * s[0])


def check_theorem3(C_stack, k, Q, cluster_map):
    """Sufficient conditions for unique recovery of ``P``.

    The stacked cluster operators need spark at least ``2k`` and, for every
    cluster, the columns of ``Q`` belonging to it must span all ``r``
    dimensions (nonsingular ``r x r`` block when the cluster has ``r``
    frames).
    """
    C_stack = np.asarray(C_stack)
    if C_stack.shape[1] > SPARK_MAX_COLS:
        raise ValueError(f"spark oracle limited to {SPARK_MAX_COLS} columns")
    Qm = Q.Q if isinstance(Q, SubspaceEstimate) else np.asarray(Q)
    cmap = np.asarray(cluster_map)
    if cmap.size != Qm.shape[1]:
        raise ValueError("cluster_map length must equal the column count of Q")
    spark = spark_bruteforce(C_stack)
    q_ok = all(_full_row_rank(Qm[:, cmap == c]) for c in np.unique(cmap))
    return UniquenessCheck(bool(spark >= 2 * k and q_ok), spark, q_ok)


@dataclass(frozen=True)
class SparkXResult:
    holds: bool
    exhaustive: bool
    tested: int

    def __bool__(self):
        return self.holds


def spark_x_condition(X, r, draws=200, seed=0):
    """Whether every set of `r` columns of `X` is linearly independent.

    Exhaustive for ``N <= 24``; otherwise `draws` random column subsets are
    tested (seeded) and the result is flagged as probabilistic.
    """
    A = X.values if isinstance(X, SignalMatrix) else np.asarray(X)
    N = A.shape[1]
    if r > N:
        raise ValueError(f"r={r} exceeds N={N}")
    if N <= SPARK_MAX_COLS:
        subsets = list(combinations(range(N), r))
        exhaustive = True
    else:
        rng = np.random.default_rng(seed)
        subsets = [tuple(sorted(rng.choice(N, size=r, replace=False)))
                   for _ in range(draws)]
        exhaustive = False
    for idx in subsets:
        sub = A[:, list(idx)]
        s = np.linalg.svd(sub, compute_uv=False)
        if s[0] == 0 or s[r - 1] <= RANK_TOL * s[0]:
            return SparkXResult(False, exhaustive, len(subsets))
    return SparkXResult(True, exhaustive, len(subsets))


def sparse_bruteforce(M, y, k, tol=1e-10):
    """Exhaustive l0 decoder: all `k`-sparse vectors consistent with ``y``.

    Every support of size `k` is tried by least squares; supports whose
    relative residual is at most `tol` are kept.

    Returns
    -------
    best : ndarray
        Minimum-residual `k`-sparse solution.
    fits : list of ndarray
        Distinct consistent solutions (more than one means ambiguity).
    """
    M = np.asarray(M)
    y = np.asarray(y)
    n = M.shape[1]
    ynorm = max(np.linalg.norm(y), 1e-300)
    best, best_res, fits = None, np.inf, []
    for S in combinations(range(n), min(k, n)):
        S = list(S)
        coef, *_ = np.linalg.lstsq(M[:, S], y, rcond=None)
        x = np.zeros(n, dtype=np.result_type(M, y, complex))
        x[S] = coef
        res = np.linalg.norm(M @ x - y) / ynorm
        if res < best_res:
            best, best_res = x, res
        if res <= tol and not any(np.linalg.norm(x - f) <= 1e-8 * max(np.linalg.norm(f), 1e-300)
                                  for f in fits):
            fits.append(x)
    return best, fits


def row_sparse_bruteforce(B, y, k, tol=1e-10):
    """Exhaustive decoder for ``P`` with at most `k` nonzero rows.

    `B` is the dense block matrix acting on ``vec(P) = [p_1; ...; p_r]``
    (a :class:`~ljsr.recovery.BlockSystem` is materialized). Every row
    support of size `k` is tried by least squares.

    Returns
    -------
    best : ndarray, shape (n, r)
        Minimum-residual row-sparse solution.
    fits : list of ndarray
        Distinct solutions with relative residual at most `tol`.
    """
    n, r = B.n, B.r
    M = B.to_dense()
    y = np.concatenate([np.ravel(v) for v in y]) if isinstance(y, (list, tuple)) else np.asarray(y)
    ynorm = max(np.linalg.norm(y), 1e-300)
    best, best_res, fits = None, np.inf, []
    for S in combinations(range(n), min(k, n)):
        cols = [s + j * n for j in range(r) for s in S]
        coef, *_ = np.linalg.lstsq(M[:, cols], y, rcond=None)
        x = np.zeros(n * r, dtype=complex)
        x[cols] = coef
        res = np.linalg.norm(M @ x - y) / ynorm
        P = x.reshape(r, n).T
        if res < best_res:
            best, best_res = P, res
        if res <= tol and not any(np.linalg.norm(P - f) <= 1e-8 * max(np.linalg.norm(f), 1e-300)
                                  for f in fits):
            fits.append(P)
    return best, fits


def ambiguous_pair(M, k):
    """Two distinct `k`-sparse vectors with the same image under `M`.

    Exists whenever ``spark(M) <= 2k``: a minimal dependent column set is
    split in two halves of size at most `k`. Returns None otherwise.
    """
    M = np.asarray(M)
    D = dependent_subset(M, max_size=2 * k)
    if D is None:
        return None
    _, _, Vh = np.linalg.svd(M[:, list(D)])
    h = Vh[-1].conj()
    half = (len(D) + 1) // 2
    a = np.zeros(M.shape[1], dtype=complex)
    b = np.zeros(M.shape[1], dtype=complex)
    a[list(D[:half])] = h[:half]
    b[list(D[half:])] = -h[half:]
    return a, b


def subspace_counterexample(Phi, k, r, N, seed=0):
    """Rank-`r`, `k`-row-sparse X whose common measurements lose rank.

    Needs ``spark(Phi) <= k``: one column of U is placed in the null space
    of a dependent set of Phi's columns, so ``Phi X`` has rank below `r`.
    Returns None when Phi has no dependent set of size at most `k`.
    """
    Phi = np.asarray(Phi)
    n = Phi.shape[1]
    if not 1 <= r <= k <= n:
        raise ValueError("need 1 <= r <= k <= n")
    D = dependent_subset(Phi, max_size=k)
    if D is None:
        return None
    rng = np.random.default_rng(seed)
    rest = [i for i in range(n) if i not in D]
    support = sorted(list(D) + list(rng.choice(rest, size=k - len(D), replace=False)))
    _, _, Vh = np.linalg.svd(Phi[:, list(D)])
    h = np.zeros(n, dtype=complex)
    h[list(D)] = Vh[-1].conj()
    U = np.zeros((n, r), dtype=complex)
    U[:, 0] = h
    U[support, 1:] = complex_normal(rng, (k, r - 1))
    U[support], _ = np.linalg.qr(U[support])
    V = np.linalg.qr(complex_normal(rng, (N, r)))[0].conj().T
    S = np.sort(rng.uniform(1.0, 2.0, size=r))[::-1]
    return SignalMatrix((U * S) @ V, true_rank=r,
                        true_support=frozenset(int(i) for i in support),
                        meta={"U": U, "S": S, "V": V, "dependent": D})
