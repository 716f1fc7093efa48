"""Right-subspace estimation from common measurements.

With ``Z = Phi X`` and ``X = U diag(S) V``, the Gram matrix is
``Z^H Z = V^H B^H B V`` where ``B = Phi U diag(S)``. Any square root of it
has the form ``R V``; we take the principal (PSD) one restricted to the
leading eigenvalues, which spans the row space of ``X`` whenever
``Phi U`` has full column rank.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import (SignalMatrix, numerical_rank, phase_normalize_rows,
                    truncated_svd)
from .sampling import build_common

__all__ = [
    "SubspaceEstimate",
    "gram",
    "estimate_right_subspace",
    "projection_error",
    "orthonormal_rows",
    "subspace_error_curve",
]


@dataclass(frozen=True)
class SubspaceEstimate:
    """Estimated right-subspace factor.

    Attributes
    ----------
    Q : ndarray, shape (r_est, N)
        Rows span the estimated row space of X.
    eigenvalues : ndarray, shape (N,)
        Gram spectrum in descending order, clipped at zero.
    """

    Q: np.ndarray
    eigenvalues: np.ndarray

    @property
    def r_est(self):
        return self.Q.shape[0]

    @property
    def N(self):
        return self.Q.shape[1]


def gram(Z):
    """Hermitian Gram matrix ``Z^H Z`` (symmetrized against roundoff)."""
    Z = np.asarray(Z)
    G = Z.conj().T @ Z
    return 0.5 * (G + G.conj().T)


def estimate_right_subspace(G, r=None, rel_tol=1e-8):
    """Principal square-root factor of the Gram matrix.

    Parameters
    ----------
    G : ndarray, shape (N, N)
        Hermitian PSD Gram matrix.
    r : int or None
        Rank to keep. ``None`` (auto) keeps the eigenvalues above
        ``rel_tol * lambda_max``.
    rel_tol : float
        Relative eigenvalue threshold defining the positive spectrum.

    Returns
    -------
    SubspaceEstimate
        ``Q = Lambda_r^{1/2} W_r^H`` with each row phase-normalized.
    """
    G = np.asarray(G)
    lam, W = np.linalg.eigh(G)
    lam, W = lam[::-1], W[:, ::-1]
    lam = np.clip(lam, 0.0, None)
    if lam[0] <= 0:
        raise ValueError("Gram matrix is zero: no signal in the common measurements")
    positive = int(np.sum(lam > rel_tol * lam[0]))
    if r is None:
        r = positive
    elif not 1 <= r <= G.shape[0]:
        raise ValueError(f"r={r} outside [1, {G.shape[0]}]")
    elif r > positive:
        raise ValueError(f"r={r} exceeds the {positive} eigenvalues above "
                         f"rel_tol={rel_tol:g}")
    Q = np.sqrt(lam[:r])[:, None] * W[:, :r].conj().T
    Q, _ = phase_normalize_rows(Q)
    return SubspaceEstimate(Q, lam)


def orthonormal_rows(V, tol=1e-12):
    """Orthonormal basis (as rows) of the row span of `V`."""
    V = np.atleast_2d(np.asarray(V))
    _, s, Vh = np.linalg.svd(V, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        raise ValueError("zero-rank input has no row space")
    keep = s > tol * s[0]
    return Vh[keep]


def projection_error(V1, V2):
    """Normalized symmetric distance between two row spaces.

    Both inputs are orthonormalized first; with orthonormal rows ``E1``,
    ``E2`` the value is

        (||(I - P1) E2^H||^2 + ||(I - P2) E1^H||^2) / (||E1||^2 + ||E2||^2)

    in spectral norm, where ``Pk`` projects onto the span of ``Ek``. The
    result lies in [0, 1] and vanishes iff the spans coincide.
    """
    E1 = orthonormal_rows(V1)
    E2 = orthonormal_rows(V2)

    def resid(Ea, Eb):
        # (I - Pa) Eb^H, columns are Eb's rows.
        M = Eb.conj().T - Ea.conj().T @ (Ea @ Eb.conj().T)
        return np.linalg.norm(M, 2) ** 2

    num = resid(E1, E2) + resid(E2, E1)
    den = np.linalg.norm(E1, 2) ** 2 + np.linalg.norm(E2, 2) ** 2
    return float(min(max(num / den, 0.0), 1.0))


def _trial_error(X, V, r_true, m_c, kind, shape, seed):
    dims = shape if kind == "fourier-lines" else X.shape[0]
    Phi = build_common(kind, m_c, dims, seed)
    G = gram(Phi.apply(X))
    est = estimate_right_subspace(G)
    if est.r_est > r_true:
        est = estimate_right_subspace(G, r_true)
    return projection_error(est.Q, V)


def subspace_error_curve(X, m_c_values, trials, seed, kind="dense-gaussian",
                         threads=0):
    """Projection error of the estimated subspace vs common-operator size.

    Each ``(m_c, trial)`` pair draws its own ``Phi`` from the seed
    ``seed * 1_000_003 + 1000 * m_c + trial``, so results do not depend on
    scheduling. The estimated rank is the auto rank capped at the true rank.

    Returns
    -------
    list of tuple
        ``(m_c, mean_error, max_error)`` sorted by ``m_c``.
    """
    if isinstance(X, SignalMatrix):
        r_true = X.true_rank
        shape = X.frame_shape
        Xv = X.values
    else:
        Xv, r_true, shape = np.asarray(X), None, None
    if r_true is None:
        r_true = numerical_rank(Xv)
    V = truncated_svd(Xv, r_true).V
    jobs = [(m, t) for m in sorted(set(int(m) for m in m_c_values)) for t in range(trials)]
    if any(m < 1 for m, _ in jobs):
        raise ValueError("m_c values must be >= 1")

    def run(job):
        m, t = job
        return _trial_error(Xv, V, r_true, m, kind, shape,
                            seed * 1_000_003 + 1000 * m + t)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            errs = list(ex.map(run, jobs))
    else:
        errs = [run(j) for j in jobs]
    rows = []
    for m in sorted(set(m for m, _ in jobs)):
        e = np.array([err for (mm, _), err in zip(jobs, errs) if mm == m])
        rows.append((m, float(e.mean()), float(e.max())))
    return rows
