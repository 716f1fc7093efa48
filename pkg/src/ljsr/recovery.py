"""Subspace-aware recovery of the coefficient matrix ``P`` in ``X = P Q``.

Once the right-subspace factor ``Q`` (``r x N``) is known, frame ``i`` of
the variable measurements reads ``y_i = A_i P q_i`` with ``q_i`` the i-th
column of ``Q``. Stacking all frames gives a linear system in ``vec(P)``
whose block row ``i`` is ``[q_{1i} A_i, ..., q_{ri} A_i]``.

Two solvers are provided: plain least squares by conjugate gradients on
the normal equations, and an ADMM scheme for

    1/2 ||B vec(P) - vec(Y)||^2 + lam * sum_s ||(grad_x P(s, :), grad_y P(s, :))||_2

where the inner norm groups, at each pixel ``s``, the horizontal and
vertical differences of all ``r`` coefficient images.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple
import warnings

import numpy as np

from .model import SignalMatrix
from .sampling import FourierLinesOperator, MeasurementSet, VariableOperatorSet
from .subspace import SubspaceEstimate

__all__ = [
    "CoefficientMatrix",
    "BlockSystem",
    "ADMMConfig",
    "RecoveryReport",
    "ConvergenceWarning",
    "DivergenceError",
    "assemble_block_system",
    "solve_least_squares",
    "pcg",
    "grad_x",
    "grad_y",
    "grad_x_adj",
    "grad_y_adj",
    "group_shrink",
    "tv_norm",
    "admm_recover",
    "reconstruct",
    "relative_error",
]

DENSE_LIMIT = 4096


class ConvergenceWarning(UserWarning):
    """An iterative solver stopped before reaching its tolerance."""


class DivergenceError(RuntimeError):
    """ADMM objective blew up."""


@dataclass
class CoefficientMatrix:
    """Coefficient images ``P`` (``n x r``) plus solver diagnostics."""

    P: np.ndarray
    iterations: int = 0
    residual: float = 0.0
    converged: bool = True
    unique: Optional[bool] = None


def _q_matrix(Q):
    return Q.Q if isinstance(Q, SubspaceEstimate) else np.asarray(Q)


def _y_list(Y):
    if isinstance(Y, MeasurementSet):
        return Y.Y
    return [np.asarray(y) for y in Y]


class BlockSystem:
    """Implicit forward/adjoint maps of the stacked per-frame system.

    ``forward(P)`` returns the list of ``A_i P q_i``; ``adjoint`` maps such
    a list back to an ``n x r`` array. Work is grouped per cluster since all
    frames of a cluster share their operator.
    """

    def __init__(self, A, Q):
        Qm = _q_matrix(Q)
        if Qm.ndim != 2 or Qm.shape[1] != A.N:
            raise ValueError(f"Q has {Qm.shape[-1]} columns, operator set has "
                             f"{A.N} frames")
        self.A = A
        self.Q = Qm
        self._groups = [(c, A.frames_of(c)) for c in range(A.p)]
        self._groups = [(c, idx) for c, idx in self._groups if idx.size]
        # Per-cluster Gram of the subspace columns, used by the normal map.
        self._H = {c: Qm[:, idx] @ Qm[:, idx].conj().T for c, idx in self._groups}
        self._Hk = None
        if all(isinstance(A.clusters[c], FourierLinesOperator) for c, _ in self._groups):
            # B^H B is block diagonal in frequency: P_hat(k) -> P_hat(k) H(k).
            Hk = np.zeros((A.n, self.r, self.r), dtype=complex)
            for c, _ in self._groups:
                Hk[A.clusters[c].mask().ravel()] += self._H[c]
            self._Hk = Hk

    @property
    def n(self):
        return self.A.n

    @property
    def r(self):
        return self.Q.shape[0]

    @property
    def N(self):
        return self.A.N

    @property
    def total_rows(self):
        return sum(self.A.rows(i) for i in range(self.N))

    @property
    def total_cols(self):
        return self.n * self.r

    @property
    def frame_shape(self):
        op = self.A.clusters[0]
        return op.shape if isinstance(op, FourierLinesOperator) else None

    def forward(self, P):
        P = np.asarray(P).reshape(self.n, self.r)
        out = [None] * self.N
        for c, idx in self._groups:
            block = self.A.clusters[c].apply(P @ self.Q[:, idx])
            for col, i in enumerate(idx):
                out[i] = block[:, col]
        return out

    def adjoint(self, Y):
        Y = _y_list(Y)
        if len(Y) != self.N:
            raise ValueError(f"expected {self.N} measurement vectors, got {len(Y)}")
        acc = np.zeros((self.n, self.r), dtype=complex)
        for c, idx in self._groups:
            W = np.stack([Y[i] for i in idx], axis=1)
            acc += self.A.clusters[c].adjoint(W) @ self.Q[:, idx].conj().T
        return acc

    def normal(self, P):
        """``B^H B`` applied to ``P`` without forming the measurements."""
        P = np.asarray(P).reshape(self.n, self.r)
        if self._Hk is not None:
            shape = self.frame_shape + (self.r,)
            Ph = np.fft.fft2(P.reshape(shape), axes=(0, 1), norm="ortho")
            Ph = np.einsum("kj,kjl->kl", Ph.reshape(self.n, self.r), self._Hk)
            return np.fft.ifft2(Ph.reshape(shape), axes=(0, 1),
                                norm="ortho").reshape(self.n, self.r)
        acc = np.zeros((self.n, self.r), dtype=complex)
        for c, _ in self._groups:
            op = self.A.clusters[c]
            acc += op.adjoint(op.apply(P @ self._H[c]))
        return acc

    def forward_vec(self, p):
        """Stacked ``vec(Y)`` from ``vec(P) = [p_1; ...; p_r]``."""
        P = np.asarray(p).reshape(self.r, self.n).T
        return np.concatenate(self.forward(P))

    def adjoint_vec(self, w):
        w = np.asarray(w)
        parts, pos = [], 0
        for i in range(self.N):
            m = self.A.rows(i)
            parts.append(w[pos:pos + m])
            pos += m
        if pos != w.size:
            raise ValueError(f"expected {pos} stacked measurements, got {w.size}")
        return self.adjoint(parts).T.ravel()

    def to_dense(self):
        """Explicit matrix with blocks ``q_{ji} A_i`` (small systems only)."""
        if self.total_cols > DENSE_LIMIT:
            raise ValueError(f"dense materialization limited to n*r <= {DENSE_LIMIT}")
        rows = []
        dense = {c: self.A.clusters[c].to_dense() for c, _ in self._groups}
        for i in range(self.N):
            Ai = dense[self.A.cluster_map[i]]
            rows.append(np.hstack([self.Q[j, i] * Ai for j in range(self.r)]))
        return np.vstack(rows)


def assemble_block_system(A, Q):
    """Block system mapping ``vec(P)`` to the stacked variable measurements."""
    return BlockSystem(A, Q)


def _dot(a, b):
    return np.vdot(a, b)


def pcg(apply_A, b, x0=None, M_inv=None, tol=1e-8, maxiter=200, min_iter=0):
    """Preconditioned conjugate gradients for a Hermitian PSD operator.

    Stops when ``||b - A x|| <= tol * ||b||`` after at least `min_iter`
    iterations. A warm start that already meets the tolerance is returned
    unchanged unless `min_iter` forces a step; in an outer loop whose
    right-hand side drifts slowly, that forced step keeps small updates
    from being dropped.

    Returns
    -------
    x : ndarray
    info : dict
        ``niter``, ``rel_res`` and ``success``.
    """
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=b.dtype)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b), {"niter": 0, "rel_res": 0.0, "success": True}
    r = b - apply_A(x) if x0 is not None else b.copy()
    z = M_inv(r) if M_inv is not None else r
    p = z.copy()
    rz = _dot(r, z).real
    res = np.linalg.norm(r) / bnorm
    it = 0
    while (res > tol or it < min_iter) and it < maxiter:
        Ap = apply_A(p)
        pAp = _dot(p, Ap).real
        if pAp <= 0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        res = np.linalg.norm(r) / bnorm
        if res <= tol and it >= min_iter:
            break
        z = M_inv(r) if M_inv is not None else r
        rz_new = _dot(r, z).real
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, {"niter": it, "rel_res": float(res), "success": bool(res <= tol)}


def solve_least_squares(B, Y, tol=1e-10, max_iter=1000, check_unique=True, seed=0):
    """Least-squares coefficients by CG on the normal equations.

    The solve starts from zero, which yields the minimum-norm minimizer.
    With `check_unique`, a second solve from a random start is compared to
    the first: CG never changes the null-space component of its starting
    point, so differing answers reveal a rank-deficient system.
    """
    b = B.adjoint(Y)
    x, info = pcg(B.normal, b, tol=tol, maxiter=max_iter)
    if not info["success"]:
        warnings.warn(f"least-squares CG stopped after {info['niter']} iterations "
                      f"with relative residual {info['rel_res']:.3e}",
                      ConvergenceWarning, stacklevel=2)
    unique = None
    if check_unique and np.linalg.norm(b) > 0:
        rng = np.random.default_rng(seed)
        x0 = (rng.standard_normal(b.shape) + 1j * rng.standard_normal(b.shape))
        x0 *= np.linalg.norm(x) / np.linalg.norm(x0)
        x2, _ = pcg(B.normal, b, x0=x0, tol=tol, maxiter=max_iter)
        gap = np.linalg.norm(x2 - x) / max(np.linalg.norm(x), 1e-300)
        unique = bool(gap <= max(1e3 * tol, 1e-6))
    return CoefficientMatrix(x, info["niter"], info["rel_res"], info["success"], unique)


# -- finite differences on the r coefficient images ---------------------------

def _images(P, shape):
    if shape is None:
        raise ValueError("gradient operators need a frame shape")
    P = np.asarray(P)
    return P.reshape(shape[0], shape[1], -1)


def grad_x(P, shape):
    """Forward difference along image axis 0 with periodic boundary."""
    I = _images(P, shape)
    return (np.roll(I, -1, axis=0) - I).reshape(np.shape(P))


def grad_y(P, shape):
    """Forward difference along image axis 1 with periodic boundary."""
    I = _images(P, shape)
    return (np.roll(I, -1, axis=1) - I).reshape(np.shape(P))


def grad_x_adj(W, shape):
    I = _images(W, shape)
    return (np.roll(I, 1, axis=0) - I).reshape(np.shape(W))


def grad_y_adj(W, shape):
    I = _images(W, shape)
    return (np.roll(I, 1, axis=1) - I).reshape(np.shape(W))


def laplacian_symbol(shape):
    """Eigenvalues of ``Dx^T Dx + Dy^T Dy`` on the unshifted FFT grid."""
    nx, ny = shape
    wx = 4 * np.sin(np.pi * np.arange(nx) / nx) ** 2
    wy = 4 * np.sin(np.pi * np.arange(ny) / ny) ** 2
    return wx[:, None] + wy[None, :]


def group_shrink(Vx, Vy, threshold):
    """Joint shrinkage of the per-pixel gradient groups.

    Row ``s`` of `Vx` and `Vy` together form one group of length ``2 r``;
    each group is scaled by ``max(0, 1 - threshold / ||group||)``. This is
    the proximal map of ``threshold * sum_s ||group_s||_2``.
    """
    Vx, Vy = np.asarray(Vx), np.asarray(Vy)
    if Vx.shape != Vy.shape:
        raise ValueError(f"shape mismatch {Vx.shape} vs {Vy.shape}")
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    nu = np.sqrt(np.sum(np.abs(Vx) ** 2, axis=-1) + np.sum(np.abs(Vy) ** 2, axis=-1))
    scale = np.zeros_like(nu)
    nz = nu > threshold
    scale[nz] = 1.0 - threshold / nu[nz]
    return Vx * scale[..., None], Vy * scale[..., None]


def tv_norm(P, shape):
    """Joint l1-l2 norm of the coefficient-image gradients."""
    gx, gy = grad_x(P, shape), grad_y(P, shape)
    return float(np.sum(np.sqrt(np.sum(np.abs(gx) ** 2 + np.abs(gy) ** 2, axis=-1))))


# -- ADMM --------------------------------------------------------------------

@dataclass
class ADMMConfig:
    """ADMM parameters.

    ``lam`` weighs the gradient penalty, ``beta`` is the splitting penalty.
    ``precond`` selects the P-step preconditioner: ``'circulant'`` inverts
    ``kappa I + lam beta Laplacian`` in the Fourier domain with ``kappa``
    the probed mean diagonal of ``B^H B``; ``'fourier-block'`` (Fourier-line
    operators only) inverts the exact per-frequency ``r x r`` blocks;
    ``'auto'`` picks the latter when available.
    """

    lam: float = 1e-5
    beta: float = 10.0
    max_outer: int = 5000
    pcg_tol: float = 1e-8
    pcg_max: int = 100
    stop_tol: float = 1e-5
    precond: str = "auto"
    seed: int = 0

    def __post_init__(self):
        for name in ("lam", "beta", "pcg_tol", "stop_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_outer < 1 or self.pcg_max < 1:
            raise ValueError("iteration caps must be >= 1")
        if not self.pcg_tol < 1:
            raise ValueError("pcg_tol must be < 1")
        if self.precond not in ("auto", "circulant", "fourier-block", "none"):
            raise ValueError(f"unknown preconditioner {self.precond!r}")


@dataclass
class RecoveryReport:
    """Per-iteration traces of an ADMM run."""

    objective_trace: List[float] = field(default_factory=list)
    primal_residual_trace: List[float] = field(default_factory=list)
    change_trace: List[float] = field(default_factory=list)
    pcg_iteration_counts: List[int] = field(default_factory=list)
    iterations_run: int = 0
    converged: bool = False
    final_relative_error: Optional[float] = None

    def rows(self):
        """``(iter, objective, primal_residual, pcg_iters)`` tuples."""
        return [(i + 1, o, p, c) for i, (o, p, c) in enumerate(
            zip(self.objective_trace, self.primal_residual_trace,
                self.pcg_iteration_counts))]


def _fourier_block_precond(B, shape, mu):
    nx, ny = shape
    L = laplacian_symbol(shape).ravel()
    r = B.r
    Hk = B._Hk + (mu * L)[:, None, None] * np.eye(r)
    # Guard frequencies seen by nothing when mu * L is tiny.
    eps = 1e-13 * max(np.abs(Hk).max(), 1e-300)
    Hk += eps * np.eye(r)
    # out(k) = rhs(k) @ inv(Hk): solve Hk^T x^T = rhs^T.
    HkT = np.transpose(Hk, (0, 2, 1))

    def M_inv(R):
        Rh = np.fft.fft2(R.reshape(nx, ny, r), axes=(0, 1), norm="ortho").reshape(-1, r)
        Xh = np.linalg.solve(HkT, Rh[..., None])[..., 0]
        return np.fft.ifft2(Xh.reshape(nx, ny, r), axes=(0, 1), norm="ortho").reshape(nx * ny, r)

    return M_inv


def _circulant_precond(B, shape, mu, seed):
    nx, ny = shape
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((B.n, B.r)) + 1j * rng.standard_normal((B.n, B.r))
    kappa = max(np.vdot(z, B.normal(z)).real / np.vdot(z, z).real, 1e-300)
    denom = (kappa + mu * laplacian_symbol(shape))[..., None]

    def M_inv(R):
        Rh = np.fft.fft2(R.reshape(nx, ny, -1), axes=(0, 1), norm="ortho")
        return np.fft.ifft2(Rh / denom, axes=(0, 1), norm="ortho").reshape(R.shape)

    return M_inv


def admm_objective(B, P, Y, lam, shape, BhY=None, yy=None):
    """``1/2 ||B vec(P) - vec(Y)||^2 + lam * TV(P)``.

    With ``BhY = B^H Y`` and ``yy = ||Y||^2`` supplied, the data term is
    expanded as a quadratic form and no forward pass is needed.
    """
    if BhY is None:
        res = sum(np.sum(np.abs(f - y) ** 2) for f, y in zip(B.forward(P), Y))
    else:
        res = max(np.vdot(P, B.normal(P)).real - 2 * np.vdot(P, BhY).real + yy, 0.0)
    return float(0.5 * res + lam * tv_norm(P, shape))


def _mean_diag(B):
    """Exact mean diagonal of ``B^H B``."""
    tot = sum(B.A.clusters[c].fro2() * np.trace(B._H[c]).real for c, _ in B._groups)
    return tot / (B.n * B.r)


def admm_recover(Y, A, Q, cfg, frame_shape=None, ground_truth=None):
    """Recover ``P`` under the joint gradient-sparsity penalty by ADMM.

    Each outer iteration solves the quadratic P-step by PCG, shrinks the
    split gradient variables and takes a multiplier ascent step. The run
    stops once both the relative change of ``P`` and the relative primal
    residual ``||G - grad P|| / ||grad P||`` fall below ``cfg.stop_tol``.

    The iterations run on a rescaled copy of the problem: ``Q`` is divided
    by ``sqrt(kappa)`` (``kappa`` the mean diagonal of ``B^H B``) and ``Y``
    by ``||Y|| / sqrt(n r)``, so the coefficients are of unit RMS size.
    ``cfg.lam`` and ``cfg.beta`` act on that normalized problem and the
    reported objective is measured in it too.

    Parameters
    ----------
    Y : MeasurementSet or list of ndarray
        Variable measurements ``y_i`` (the common ones are not used).
    A : VariableOperatorSet
    Q : SubspaceEstimate or ndarray
    cfg : ADMMConfig
    frame_shape : tuple of int, optional
        Needed unless the operators are Fourier lines.
    ground_truth : SignalMatrix or ndarray, optional
        When given, the report carries the final relative error of ``P Q``.

    Returns
    -------
    CoefficientMatrix, RecoveryReport

    Raises
    ------
    DivergenceError
        If the objective exceeds 1e6 times its initial value.
    """
    Y = _y_list(Y)
    Qm = _q_matrix(Q)
    B0 = BlockSystem(A, Qm)
    shape = frame_shape or B0.frame_shape
    if shape is None:
        raise ValueError("frame_shape is required for the gradient penalty")
    if shape[0] * shape[1] != B0.n:
        raise ValueError(f"frame_shape {shape} does not match n={B0.n}")
    if not np.any(Qm):
        raise ValueError("subspace factor Q is zero")

    q_scale = np.sqrt(_mean_diag(B0))
    ynorm = np.sqrt(sum(np.sum(np.abs(y) ** 2) for y in Y))
    y_scale = ynorm / np.sqrt(B0.n * B0.r) if ynorm > 0 else 1.0
    B = BlockSystem(A, Qm / q_scale)
    Yn = [y / y_scale for y in Y]

    Pn, report = _admm_core(B, Yn, cfg, shape)
    P = Pn * (y_scale / q_scale)
    if ground_truth is not None:
        report.final_relative_error = relative_error(reconstruct(P, Qm), ground_truth)
    return CoefficientMatrix(P, report.iterations_run,
                             report.primal_residual_trace[-1], report.converged), report


def _admm_core(B, Y, cfg, shape):
    lam, beta = cfg.lam, cfg.beta
    mu = lam * beta

    precond = cfg.precond
    if precond == "auto":
        fourier = all(isinstance(op, FourierLinesOperator) for op in B.A.clusters)
        precond = "fourier-block" if fourier else "circulant"
    if precond == "fourier-block":
        M_inv = _fourier_block_precond(B, shape, mu)
    elif precond == "circulant":
        M_inv = _circulant_precond(B, shape, mu, cfg.seed)
    else:
        M_inv = None

    def system(P):
        return B.normal(P) + mu * (grad_x_adj(grad_x(P, shape), shape)
                                   + grad_y_adj(grad_y(P, shape), shape))

    BhY = B.adjoint(Y)
    yy = float(sum(np.sum(np.abs(y) ** 2) for y in Y))
    P = BhY.copy()
    Gx = np.zeros_like(P)
    Gy = np.zeros_like(P)
    Lx = np.zeros_like(P)
    Ly = np.zeros_like(P)
    report = RecoveryReport()
    obj0 = admm_objective(B, P, Y, lam, shape, BhY, yy)

    for it in range(cfg.max_outer):
        rhs = BhY + mu * (grad_x_adj(Gx + Lx / beta, shape)
                          + grad_y_adj(Gy + Ly / beta, shape))
        P_new, info = pcg(system, rhs, x0=P, M_inv=M_inv, tol=cfg.pcg_tol,
                          maxiter=cfg.pcg_max, min_iter=1)
        dx, dy = grad_x(P_new, shape), grad_y(P_new, shape)
        Gx, Gy = group_shrink(dx - Lx / beta, dy - Ly / beta, 1.0 / beta)
        Lx += beta * (Gx - dx)
        Ly += beta * (Gy - dy)

        pn = np.linalg.norm(P_new)
        change = np.linalg.norm(P_new - P) / pn if pn > 0 else 0.0
        gnorm = np.sqrt(np.linalg.norm(dx) ** 2 + np.linalg.norm(dy) ** 2)
        gap = np.sqrt(np.linalg.norm(Gx - dx) ** 2 + np.linalg.norm(Gy - dy) ** 2)
        primal = gap / gnorm if gnorm > 0 else float(gap > 0)
        P = P_new
        obj = admm_objective(B, P, Y, lam, shape, BhY, yy)

        report.objective_trace.append(obj)
        report.primal_residual_trace.append(float(primal))
        report.change_trace.append(float(change))
        report.pcg_iteration_counts.append(int(info["niter"]))
        report.iterations_run = it + 1
        if not np.isfinite(obj) or (obj0 > 0 and obj > 1e6 * obj0):
            raise DivergenceError(f"ADMM objective {obj:.3e} exceeded 1e6 x its "
                                  f"initial value {obj0:.3e} at iteration {it + 1}")
        if change < cfg.stop_tol and primal < cfg.stop_tol:
            report.converged = True
            break
    return P, report


def reconstruct(P, Q, frame_shape=None):
    """Signal estimate ``P @ Q``."""
    Pm = P.P if isinstance(P, CoefficientMatrix) else np.asarray(P)
    Qm = _q_matrix(Q)
    if Pm.shape[1] != Qm.shape[0]:
        raise ValueError(f"inner dimensions differ: P has {Pm.shape[1]} columns, "
                         f"Q has {Qm.shape[0]} rows")
    return SignalMatrix(Pm @ Qm, frame_shape=frame_shape)


def relative_error(Xhat, X):
    """``||Xhat - X||_F / ||X||_F``."""
    a = Xhat.values if isinstance(Xhat, SignalMatrix) else np.asarray(Xhat)
    b = X.values if isinstance(X, SignalMatrix) else np.asarray(X)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    nb = np.linalg.norm(b)
    if nb == 0:
        raise ValueError("reference matrix is zero")
    return float(np.linalg.norm(a - b) / nb)
