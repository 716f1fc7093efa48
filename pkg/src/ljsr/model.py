"""Ground-truth signal generators and basic matrix facts.

Signal matrices are ``n x N``: column ``t`` is frame ``t`` flattened in
row-major order. Random draws use numpy's PCG64 generator
(``np.random.default_rng``); Gaussian variates come from its ziggurat
``standard_normal`` transform, and a complex standard normal is
``(a + 1j*b) / sqrt(2)`` with independent real ``a``, ``b``.
"""

from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Tuple

import numpy as np

__all__ = [
    "SignalMatrix",
    "SVDFactors",
    "PhantomSpec",
    "RankError",
    "numerical_rank",
    "make_random_lrjs",
    "make_dynamic_phantom",
    "truncated_svd",
    "spark_bruteforce",
    "dependent_subset",
    "joint_support",
    "degrees_of_freedom",
    "complex_normal",
    "orthonormal_columns",
]

RANK_TOL = 1e-10
SPARK_MAX_COLS = 24


class RankError(ValueError):
    """A requested rank is not supported by the data."""


@dataclass(frozen=True)
class SignalMatrix:
    """Ground-truth or reconstructed signal matrix.

    Attributes
    ----------
    values : ndarray, shape (n, N)
        Columns are vectorized frames.
    frame_shape : tuple of int, optional
        ``(nx, ny)`` with ``nx * ny == n`` when frames are 2D images.
    true_rank : int, optional
    true_support : frozenset of int, optional
        Row indices allowed to be nonzero.
    """

    values: np.ndarray
    frame_shape: Optional[Tuple[int, int]] = None
    true_rank: Optional[int] = None
    true_support: Optional[frozenset] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.values.ndim != 2 or min(self.values.shape) < 1:
            raise ValueError(f"signal matrix must be 2D and nonempty, "
                             f"got shape {self.values.shape}")
        if self.frame_shape is not None:
            nx, ny = self.frame_shape
            if nx * ny != self.values.shape[0]:
                raise ValueError(f"frame_shape {self.frame_shape} does not "
                                 f"match n={self.values.shape[0]}")

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def N(self):
        return self.values.shape[1]

    def check_invariants(self):
        """Raise AssertionError if the recorded rank/support is violated."""
        if self.true_rank is not None:
            assert numerical_rank(self.values) == self.true_rank
        if self.true_support is not None:
            norms = np.linalg.norm(self.values, axis=1)
            off = np.setdiff1d(np.arange(self.n),
                               np.fromiter(self.true_support, int))
            if off.size and norms.max() > 0:
                assert norms[off].max() <= 1e-12 * norms.max()

    def frame(self, t):
        """Frame `t` as a 2D image (requires `frame_shape`)."""
        if self.frame_shape is None:
            raise ValueError("signal has no frame_shape")
        return self.values[:, t].reshape(self.frame_shape)


@dataclass(frozen=True)
class SVDFactors:
    """Truncated SVD ``X ~ U @ diag(S) @ V`` with V holding rows."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    @property
    def rank(self):
        return self.S.size

    def reconstruct(self):
        return (self.U * self.S) @ self.V


@dataclass(frozen=True)
class PhantomSpec:
    """Parameters of the periodic dynamic phantom."""

    nx: int = 32
    ny: int = 32
    N: int = 60
    period: int = 6
    k_target: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.period < 1:
            raise ValueError("period must be >= 1")
        if self.N < self.period:
            raise ValueError("N must be >= period")
        if self.nx < 4 or self.ny < 4:
            raise ValueError("nx and ny must be >= 4")


def complex_normal(rng, shape):
    """Circular complex standard normal samples with E|z|^2 = 1."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) / np.sqrt(2.0)


def orthonormal_columns(rng, rows, cols):
    """Random ``rows x cols`` complex matrix with orthonormal columns."""
    Qm, Rm = np.linalg.qr(complex_normal(rng, (rows, cols)))
    # Fix the QR phase ambiguity so the draw is Haar distributed.
    d = np.diag(Rm)
    return Qm * (d / np.abs(d))


def numerical_rank(A, tol=RANK_TOL):
    """Number of singular values above ``tol * sigma_max``."""
    s = np.linalg.svd(np.asarray(A), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def make_random_lrjs(n, N, r, k, seed):
    """Random rank-`r` matrix supported on `k` rows.

    ``X = U diag(S) V`` with U orthonormal and nonzero only on a uniformly
    chosen set of `k` rows, V with orthonormal rows and S drawn uniformly
    from [1, 2] (sorted descending).
    """
    if not 1 <= r:
        raise ValueError(f"rank r={r} must be >= 1")
    if r > k:
        raise ValueError(f"rank r={r} exceeds row sparsity k={k}")
    if r > N:
        raise ValueError(f"rank r={r} exceeds column count N={N}")
    if k > n:
        raise ValueError(f"sparsity k={k} exceeds row count n={n}")
    rng = np.random.default_rng(seed)
    support = np.sort(rng.choice(n, size=k, replace=False))
    U = np.zeros((n, r), dtype=complex)
    U[support] = orthonormal_columns(rng, k, r)
    V = orthonormal_columns(rng, N, r).conj().T
    S = np.sort(rng.uniform(1.0, 2.0, size=r))[::-1]
    X = (U * S) @ V
    return SignalMatrix(X, true_rank=r,
                        true_support=frozenset(int(i) for i in support),
                        meta={"U": U, "S": S, "V": V})


def _ellipse(xx, yy, cx, cy, ax, ay, theta=0.0):
    c, s = np.cos(theta), np.sin(theta)
    u = ((xx - cx) * c + (yy - cy) * s) / ax
    v = (-(xx - cx) * s + (yy - cy) * c) / ay
    return (u * u + v * v) <= 1.0


def _phantom_frame(xx, yy, s, mods, statics):
    """One frame at cycle position ``s`` in [0, 1)."""
    img = 0.5 * _ellipse(xx, yy, 0.0, 0.0, 0.88, 0.72)
    img -= 0.3 * _ellipse(xx, yy, -0.42, 0.05, 0.22, 0.42, 0.2)
    img -= 0.3 * _ellipse(xx, yy, 0.45, 0.05, 0.2, 0.4, -0.2)
    for cx, cy, ax, ay, amp in statics:
        img += amp * _ellipse(xx, yy, cx, cy, ax, ay)
    # Asymmetric contraction waveform: every phase gets its own radius.
    w = np.sin(2 * np.pi * s + 0.3) + 0.4 * np.sin(4 * np.pi * s + 1.1)
    a = 0.26 * (1.0 + 0.22 * w)
    img += (0.9 + 0.1 * np.cos(2 * np.pi * s)) * _ellipse(
        xx, yy, 0.02, -0.12, a, 0.85 * a, 0.3)
    # Contrast-modulated inclusions, one harmonic each.
    for (cx, cy, rad, h, ph) in mods:
        img += 0.25 * np.cos(2 * np.pi * h * s + ph) * _ellipse(
            xx, yy, cx, cy, rad, rad)
    return img


def _phantom_frames(spec, n_static):
    rng = np.random.default_rng(spec.seed)
    # Pixel-center coordinates on [-1, 1]^2; axis 0 is y (rows).
    yy, xx = np.meshgrid(
        (np.arange(spec.nx) + 0.5) / spec.nx * 2 - 1,
        (np.arange(spec.ny) + 0.5) / spec.ny * 2 - 1, indexing="ij")
    T = spec.period
    rad = max(1.6 / min(spec.nx, spec.ny), 0.06)
    mods = []
    for j in range(max(T - 1, 0)):
        ang = 2 * np.pi * j / max(T - 1, 1) + rng.uniform(0, 0.3)
        mods.append((0.55 * np.cos(ang), 0.45 * np.sin(ang) + 0.05,
                     rad * rng.uniform(1.0, 1.4), j // 2 + 1,
                     rng.uniform(0, 2 * np.pi)))
    statics = []
    for _ in range(n_static):
        statics.append((rng.uniform(-0.6, 0.6), rng.uniform(-0.5, 0.5),
                        rad * rng.uniform(1.0, 2.0), rad * rng.uniform(1.0, 2.0),
                        rng.uniform(0.1, 0.3)))
    return np.stack([_phantom_frame(xx, yy, p / T, mods, statics).ravel()
                     for p in range(T)], axis=1)


def _gradient_support_size(frames, shape):
    imgs = frames.T.reshape(-1, *shape)
    gx = np.roll(imgs, -1, axis=1) - imgs
    gy = np.roll(imgs, -1, axis=2) - imgs
    mag = np.sqrt(np.sum(np.abs(gx) ** 2 + np.abs(gy) ** 2, axis=0))
    return int(np.count_nonzero(mag > 1e-12 * max(mag.max(), 1e-300)))


def make_dynamic_phantom(spec):
    """Periodic piecewise-constant phantom with a pulsating inner ellipse.

    Frame ``t`` is an exact copy of frame ``t mod spec.period``. When
    ``spec.k_target`` is set, static inclusions are added (up to 64) until
    the joint gradient support reaches it.
    """
    shape = (spec.nx, spec.ny)
    n_static = 0
    base = _phantom_frames(spec, n_static)
    if spec.k_target is not None:
        while (_gradient_support_size(base, shape) < spec.k_target
               and n_static < 64):
            n_static += 1
            base = _phantom_frames(spec, n_static)
    idx = np.arange(spec.N) % spec.period
    X = base[:, idx]
    return SignalMatrix(X, frame_shape=shape, true_rank=numerical_rank(base),
                        meta={"period": spec.period, "seed": spec.seed,
                              "n_static": n_static})


def truncated_svd(X, r):
    """Top-`r` SVD factors with a deterministic phase convention.

    The largest-magnitude entry of each row of V is made real positive and
    the matching column of U absorbs the conjugate phase.

    Raises
    ------
    RankError
        If ``sigma_r <= 1e-14 * sigma_1``.
    """
    A = X.values if isinstance(X, SignalMatrix) else np.asarray(X)
    if not 1 <= r <= min(A.shape):
        raise ValueError(f"r={r} outside [1, {min(A.shape)}]")
    U, s, Vh = np.linalg.svd(A, full_matrices=False)
    if s[0] == 0 or s[r - 1] <= 1e-14 * s[0]:
        raise RankError(f"requested rank {r} exceeds numerical rank")
    U, s, V = U[:, :r], s[:r], Vh[:r]
    V, ph = phase_normalize_rows(V)
    U = U * ph.conj()[None, :]
    return SVDFactors(U, s, V)


def phase_normalize_rows(V):
    """Rotate each row so its largest-magnitude entry is real positive.

    Returns the rotated rows and the unit phases applied (row ``i`` was
    multiplied by ``ph[i]``).
    """
    V = np.asarray(V)
    piv = V[np.arange(V.shape[0]), np.argmax(np.abs(V), axis=1)]
    ph = np.ones(V.shape[0], dtype=V.dtype)
    nz = piv != 0
    ph[nz] = np.abs(piv[nz]) / piv[nz]
    return V * ph[:, None], ph


def _deficient(batch, tol):
    # batch: (b, m, s); dependent if sigma_min <= tol * sigma_max
    sv = np.linalg.svd(batch, compute_uv=False)
    smax = sv[:, 0]
    return (smax == 0) | (sv[:, -1] <= tol * smax)


def dependent_subset(A, tol=RANK_TOL, max_size=None, chunk=20000):
    """Smallest linearly dependent column subset of `A`, or None.

    Exhaustive search by increasing cardinality. Subsets larger than
    ``rank(A)`` are dependent by counting, so the search stops there.
    """
    A = np.asarray(A)
    m, n = A.shape
    if n > SPARK_MAX_COLS:
        raise ValueError(f"spark search limited to {SPARK_MAX_COLS} columns, "
                         f"got {n}")
    rho = numerical_rank(A, tol) if n else 0
    top = min(rho + 1, n)
    if max_size is not None:
        top = min(top, max_size)
    for s in range(1, top + 1):
        if s > rho:
            # Any rho+1 columns span at most rho dimensions.
            return tuple(range(s))
        it = combinations(range(n), s)
        while True:
            block = []
            for c in it:
                block.append(c)
                if len(block) == chunk:
                    break
            if not block:
                break
            idx = np.array(block)
            hit = np.flatnonzero(_deficient(A[:, idx].transpose(1, 0, 2), tol))
            if hit.size:
                return tuple(int(i) for i in idx[hit[0]])
    return None


def spark_bruteforce(A, tol=RANK_TOL):
    """Spark of `A` by exhaustive search over column subsets.

    Returns the smallest number of linearly dependent columns, or
    ``n + 1`` when all columns are independent (full spark convention).
    Limited to ``n <= 24`` columns.
    """
    A = np.asarray(A)
    cols = dependent_subset(A, tol)
    return A.shape[1] + 1 if cols is None else len(cols)


def joint_support(X, tol):
    """Rows of `X` whose Euclidean norm exceeds ``tol * max_row_norm``."""
    if tol < 0:
        raise ValueError("tol must be >= 0")
    A = X.values if isinstance(X, SignalMatrix) else np.asarray(X)
    norms = np.linalg.norm(A, axis=1)
    if norms.size == 0 or norms.max() == 0:
        return set()
    return {int(i) for i in np.flatnonzero(norms > tol * norms.max())}


def degrees_of_freedom(n, N, r, k):
    """Parameter count ``r (k + N - r)`` of a rank-r matrix on k rows."""
    if not 1 <= r <= min(k, N):
        raise ValueError(f"need 1 <= r <= min(k, N); got r={r}, k={k}, N={N}")
    if k > n:
        raise ValueError(f"k={k} exceeds n={n}")
    return r * (k + N - r)
