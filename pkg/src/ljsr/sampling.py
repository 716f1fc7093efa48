"""Measurement operators and the hybrid common/variable acquisition model.

Each frame ``x_i`` is observed twice: by the common operator ``Phi`` shared
by all frames (``z_i = Phi x_i``) and by a per-frame variable operator
(``y_i = A_i x_i``). Variable operators are drawn per cluster; frames in the
same cluster share one operator object.

Two operator kinds are provided:

``dense-gaussian``
    explicit complex Gaussian matrix scaled by ``1/sqrt(rows)``.
``fourier-lines``
    unitary 2D DFT of the frame restricted to radial lines through the
    k-space center, discretized to the nearest Cartesian grid point.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union
import math
import warnings

import numpy as np

from .fmx import read_fmx, write_fmx
from .model import SignalMatrix, complex_normal

__all__ = [
    "DenseOperator",
    "FourierLinesOperator",
    "VariableOperatorSet",
    "MeasurementSet",
    "radial_line",
    "max_lines",
    "build_common",
    "build_variable_set",
    "cluster_map",
    "measure",
    "noise_sigma_for_snr",
    "empirical_snr_db",
    "apply",
    "adjoint",
    "save_measurements",
    "load_measurements",
    "write_lines",
    "read_lines",
]

SCHEMES = ("consecutive", "periodic", "permuted")
KINDS = ("dense-gaussian", "fourier-lines")


class DenseOperator:
    """Explicit ``m x n`` measurement matrix."""

    kind = "dense-gaussian"

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=complex)
        self.matrix.setflags(write=False)

    @property
    def rows(self):
        return self.matrix.shape[0]

    @property
    def n(self):
        return self.matrix.shape[1]

    def apply(self, x):
        x = np.asarray(x)
        if x.shape[0] != self.n:
            raise ValueError(f"operator expects {self.n} rows, got {x.shape[0]}")
        return self.matrix @ x

    def adjoint(self, y):
        y = np.asarray(y)
        if y.shape[0] != self.rows:
            raise ValueError(f"adjoint expects {self.rows} rows, got {y.shape[0]}")
        return self.matrix.conj().T @ y

    def to_dense(self):
        return self.matrix.copy()

    def fro2(self):
        return float(np.sum(np.abs(self.matrix) ** 2))


class FourierLinesOperator:
    """Unitary 2D DFT sampled at a set of grid locations.

    Parameters
    ----------
    shape : tuple of int
        Frame shape ``(nx, ny)``.
    locations : array_like of int, shape (m, 2)
        Sampled k-space locations as ``(row, col)`` indices on the centered
        grid, DC at ``(nx // 2, ny // 2)``. Duplicates are dropped (first
        occurrence kept).
    """

    kind = "fourier-lines"

    def __init__(self, shape, locations):
        self.shape = (int(shape[0]), int(shape[1]))
        nx, ny = self.shape
        loc = np.asarray(locations, dtype=int).reshape(-1, 2)
        if loc.size == 0:
            raise ValueError("fourier-lines operator needs at least one location")
        if (loc < 0).any() or (loc[:, 0] >= nx).any() or (loc[:, 1] >= ny).any():
            raise ValueError("sampled location outside the grid")
        _, first = np.unique(loc[:, 0] * ny + loc[:, 1], return_index=True)
        self.locations = loc[np.sort(first)]
        self.locations.setflags(write=False)
        kr = (self.locations[:, 0] - nx // 2) % nx
        kc = (self.locations[:, 1] - ny // 2) % ny
        self._flat = kr * ny + kc

    @property
    def rows(self):
        return self.locations.shape[0]

    @property
    def n(self):
        return self.shape[0] * self.shape[1]

    def mask(self):
        """Boolean sampling mask on the unshifted FFT grid."""
        m = np.zeros(self.n, dtype=bool)
        m[self._flat] = True
        return m.reshape(self.shape)

    def apply(self, x):
        x = np.asarray(x)
        if x.shape[0] != self.n:
            raise ValueError(f"operator expects {self.n} rows, got {x.shape[0]}")
        img = x.reshape(self.shape + x.shape[1:])
        spec = np.fft.fft2(img, axes=(0, 1), norm="ortho")
        return spec.reshape((self.n,) + x.shape[1:])[self._flat]

    def adjoint(self, y):
        y = np.asarray(y)
        if y.shape[0] != self.rows:
            raise ValueError(f"adjoint expects {self.rows} rows, got {y.shape[0]}")
        full = np.zeros((self.n,) + y.shape[1:], dtype=complex)
        full[self._flat] = y
        img = np.fft.ifft2(full.reshape(self.shape + y.shape[1:]), axes=(0, 1),
                           norm="ortho")
        return img.reshape((self.n,) + y.shape[1:])

    def to_dense(self):
        return self.apply(np.eye(self.n))

    def fro2(self):
        # Each row is a unit-norm row of the unitary DFT.
        return float(self.rows)


Operator = Union[DenseOperator, FourierLinesOperator]


def apply(op, frame):
    """Forward action of a measurement operator on a frame (or columns)."""
    return op.apply(frame)


def adjoint(op, meas):
    """Exact conjugate-transpose action of `op`."""
    return op.adjoint(meas)


def max_lines(shape):
    """Number of candidate radial directions on an ``(nx, ny)`` grid."""
    return 2 * max(shape)


def radial_line(shape, theta):
    """Grid locations of the line through the k-space center at angle `theta`.

    ``theta = 0`` is the horizontal line (fixed row ``nx // 2``). Points are
    taken every half pixel along the line and rounded to the nearest grid
    point.
    """
    nx, ny = shape
    cr, cc = nx // 2, ny // 2
    R = max(nx, ny)
    t = np.arange(-2 * R, 2 * R + 1) / 2.0
    rr = np.rint(cr - t * np.sin(theta)).astype(int)
    cc_ = np.rint(cc + t * np.cos(theta)).astype(int)
    ok = (rr >= 0) & (rr < nx) & (cc_ >= 0) & (cc_ < ny)
    pts = np.stack([rr[ok], cc_[ok]], axis=1)
    _, first = np.unique(pts[:, 0] * ny + pts[:, 1], return_index=True)
    return pts[np.sort(first)]


def _lines_operator(shape, line_count, rng, stratum=(0, 1)):
    if line_count < 1:
        raise ValueError("line_count must be >= 1")
    if line_count > max_lines(shape):
        raise ValueError(f"line_count={line_count} exceeds the "
                         f"{max_lines(shape)} distinct lines of a {shape} grid")
    # Equispaced angles with a random rotation. Operator j of p draws its
    # rotation inside the j-th of p slices of the line spacing, so the
    # union over operators stays close to uniform in angle.
    j, p = stratum
    spacing = np.pi / line_count
    theta0 = (j + rng.uniform()) * spacing / p
    thetas = theta0 + np.pi * np.arange(line_count) / line_count
    loc = np.concatenate([radial_line(shape, th) for th in thetas])
    op = FourierLinesOperator(shape, loc)
    op.angles = thetas
    return op


def _gaussian_operator(rows, n, rng):
    if rows < 1:
        raise ValueError("operator needs at least one row")
    if rows > n:
        warnings.warn(f"{rows} rows exceed the {n} unknowns per frame")
    return DenseOperator(complex_normal(rng, (rows, n)) / np.sqrt(rows))


def _dims(size):
    if np.ndim(size) == 0:
        return int(size), None
    nx, ny = (int(v) for v in size)
    return nx * ny, (nx, ny)


def build_common(kind, size, dims, seed):
    """Common operator ``Phi``.

    Parameters
    ----------
    kind : {'dense-gaussian', 'fourier-lines'}
    size : int
        Row count ``m_c`` for dense operators, line count for Fourier lines.
    dims : int or tuple of int
        Frame length ``n`` or frame shape ``(nx, ny)``; Fourier lines need
        the shape.
    seed : int
    """
    n, shape = _dims(dims)
    rng = np.random.default_rng([seed, 0xC0])
    if kind == "dense-gaussian":
        return _gaussian_operator(size, n, rng)
    if kind == "fourier-lines":
        if shape is None:
            raise ValueError("fourier-lines operators need a frame shape")
        return _lines_operator(shape, size, rng)
    raise ValueError(f"unknown operator kind {kind!r}; expected one of {KINDS}")


def cluster_map(scheme, p, N, seed=0, permutation=None):
    """Frame-to-cluster assignment for one of the clustering schemes.

    Returns the map and a flag telling whether the consecutive layout had to
    be truncated (``N`` not a multiple of the cluster size).
    """
    if p < 1:
        raise ValueError("cluster count p must be >= 1")
    if p > N:
        raise ValueError(f"cluster count p={p} exceeds frame count N={N}")
    size = math.ceil(N / p)
    consecutive = np.arange(N) // size
    truncated = N % size != 0 or consecutive[-1] != p - 1
    if scheme == "consecutive":
        return consecutive, truncated
    if scheme == "periodic":
        return np.arange(N) % p, N % p != 0
    if scheme == "permuted":
        if permutation is None:
            permutation = np.random.default_rng([seed, 0x9E]).permutation(N)
        permutation = np.asarray(permutation)
        if sorted(permutation.tolist()) != list(range(N)):
            raise ValueError("permutation must reorder range(N)")
        return consecutive[permutation], truncated
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


@dataclass
class VariableOperatorSet:
    """Per-frame variable operators grouped into clusters.

    ``operators[i]`` is ``clusters[cluster_map[i]]`` (the same object), so
    frames in one cluster see bit-identical operators.
    """

    clusters: List[Operator]
    cluster_map: np.ndarray
    scheme: str
    truncated: bool = False
    seed: Optional[int] = None

    def __post_init__(self):
        self.cluster_map = np.asarray(self.cluster_map, dtype=int)
        if self.cluster_map.min() < 0 or self.cluster_map.max() >= len(self.clusters):
            raise ValueError("cluster_map references a missing cluster")
        ns = {op.n for op in self.clusters}
        if len(ns) != 1:
            raise ValueError("cluster operators disagree on frame length")

    @property
    def N(self):
        return self.cluster_map.size

    @property
    def n(self):
        return self.clusters[0].n

    @property
    def p(self):
        return len(self.clusters)

    @property
    def operators(self):
        return [self.clusters[c] for c in self.cluster_map]

    def frames_of(self, c):
        return np.flatnonzero(self.cluster_map == c)

    def rows(self, i):
        return self.clusters[self.cluster_map[i]].rows


def build_variable_set(scheme, p, N, m_v, dims, kind, seed, permutation=None):
    """Draw `p` independent cluster operators and assign frames to them.

    `m_v` is the row count per operator (dense) or the line count per
    operator (Fourier lines). Each cluster draws from its own stream
    ``(seed, j)``; Fourier-line clusters use stratified rotations.
    """
    cmap, truncated = cluster_map(scheme, p, N, seed, permutation)
    n, shape = _dims(dims)
    clusters = []
    for j in range(p):
        rng = np.random.default_rng([seed, 0xA5, j])
        if kind == "dense-gaussian":
            clusters.append(_gaussian_operator(m_v, n, rng))
        elif kind == "fourier-lines":
            if shape is None:
                raise ValueError("fourier-lines operators need a frame shape")
            clusters.append(_lines_operator(shape, m_v, rng, (j, p)))
        else:
            raise ValueError(f"unknown operator kind {kind!r}")
    return VariableOperatorSet(clusters, cmap, scheme, truncated, seed)


@dataclass
class MeasurementSet:
    """Common measurements ``Z`` (columns ``z_i``) and variable ``y_i``."""

    Z: np.ndarray
    Y: List[np.ndarray]
    noise_sigma: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.Z.shape[1] != len(self.Y):
            raise ValueError("Z column count must equal the number of y_i")

    @property
    def N(self):
        return len(self.Y)


def _values(X):
    return X.values if isinstance(X, SignalMatrix) else np.asarray(X)


def measure(X, Phi, A, noise_sigma=0.0, seed=0):
    """Acquire common and variable measurements of every frame.

    Noise is i.i.d. circular complex Gaussian with ``E|e|^2 = noise_sigma**2``
    added to both ``z_i`` and ``y_i``. Frame ``i`` draws its noise from the
    stream ``(seed, i)`` so the result does not depend on evaluation order.
    """
    Xv = _values(X)
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    if Phi.n != Xv.shape[0] or A.n != Xv.shape[0]:
        raise ValueError(f"operators act on length {Phi.n}/{A.n} frames, "
                         f"signal has n={Xv.shape[0]}")
    if A.N != Xv.shape[1]:
        raise ValueError(f"operator set has {A.N} frames, signal has {Xv.shape[1]}")
    Z = np.asarray(Phi.apply(Xv), dtype=complex)
    Y = [None] * A.N
    for c in range(A.p):
        idx = A.frames_of(c)
        if idx.size:
            block = np.asarray(A.clusters[c].apply(Xv[:, idx]), dtype=complex)
            for col, i in enumerate(idx):
                Y[i] = block[:, col].copy()
    if noise_sigma > 0:
        for i in range(A.N):
            rng = np.random.default_rng([seed, 0x5E, i])
            Z[:, i] += noise_sigma * complex_normal(rng, Z.shape[0])
            Y[i] = Y[i] + noise_sigma * complex_normal(rng, Y[i].size)
    return MeasurementSet(Z, Y, float(noise_sigma))


def noise_sigma_for_snr(X, Phi, A, snr_db):
    """Noise level giving the requested SNR over all clean measurements."""
    clean = measure(X, Phi, A, 0.0)
    energy = np.sum(np.abs(clean.Z) ** 2) + sum(np.sum(np.abs(y) ** 2) for y in clean.Y)
    count = clean.Z.size + sum(y.size for y in clean.Y)
    return float(np.sqrt(energy / count) * 10.0 ** (-snr_db / 20.0))


def empirical_snr_db(clean, noisy):
    """``20 log10(||clean|| / ||noisy - clean||)`` over Z and all y_i."""
    sig = np.concatenate([clean.Z.ravel()] + [y for y in clean.Y])
    obs = np.concatenate([noisy.Z.ravel()] + [y for y in noisy.Y])
    return float(20.0 * np.log10(np.linalg.norm(sig) / np.linalg.norm(obs - sig)))


# -- serialization -----------------------------------------------------------

def write_lines(path, shape, frames):
    """Write ``lines v1``: header, then one ``frame i npts`` block per entry.

    `frames` is a sequence of ``(m, 2)`` location arrays.
    """
    out = [f"lines v1 {shape[0]} {shape[1]} {len(frames)}"]
    for i, loc in enumerate(frames):
        loc = np.asarray(loc).reshape(-1, 2)
        out.append(f"frame {i} {loc.shape[0]}")
        out.extend(f"{int(a)} {int(b)}" for a, b in loc)
    Path(path).write_text("\n".join(out) + "\n")


def read_lines(path):
    """Inverse of :func:`write_lines`; returns ``(shape, [locations...])``."""
    toks = Path(path).read_text().split("\n")
    head = toks[0].split()
    if head[:2] != ["lines", "v1"]:
        raise ValueError(f"{path}: not a 'lines v1' file")
    shape = (int(head[2]), int(head[3]))
    count = int(head[4])
    frames, pos = [], 1
    for _ in range(count):
        tag, _, npts = toks[pos].split()
        if tag != "frame":
            raise ValueError(f"{path}: expected frame block at line {pos + 1}")
        npts = int(npts)
        rows = [tuple(map(int, t.split())) for t in toks[pos + 1:pos + 1 + npts]]
        frames.append(np.array(rows, dtype=int).reshape(-1, 2))
        pos += 1 + npts
    return shape, frames


def write_kv(path, items):
    """Write a ``key = value`` text file in insertion order."""
    Path(path).write_text("".join(f"{k} = {v}\n" for k, v in items.items()))


def read_kv(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            k, _, v = line.partition("=")
            out[k.strip()] = v.strip()
    return out


def save_operator(path_stem, op):
    """Store `op` as ``<stem>.fmx`` (dense) or ``<stem>.lines``."""
    stem = Path(path_stem)
    if op.kind == "dense-gaussian":
        write_fmx(stem.with_suffix(".fmx"), op.matrix)
    else:
        write_lines(stem.with_suffix(".lines"), op.shape, [op.locations])


def load_operator(path):
    path = Path(path)
    if path.suffix == ".fmx":
        return DenseOperator(read_fmx(path))
    shape, frames = read_lines(path)
    return FourierLinesOperator(shape, frames[0])


def save_measurements(directory, ms, meta=None):
    """Write ``Z.fmx``, ``y_0000.fmx`` ... and a ``meta`` key-value file."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_fmx(d / "Z.fmx", ms.Z)
    for i, y in enumerate(ms.Y):
        write_fmx(d / f"y_{i:04d}.fmx", y)
    info = {"N": ms.N, "noise_sigma": repr(ms.noise_sigma)}
    info.update(ms.meta)
    info.update(meta or {})
    write_kv(d / "meta", info)


def load_measurements(directory):
    d = Path(directory)
    meta = read_kv(d / "meta")
    N = int(meta["N"])
    Z = read_fmx(d / "Z.fmx").astype(complex)
    Y = [read_fmx(d / f"y_{i:04d}.fmx")[:, 0].astype(complex) for i in range(N)]
    return MeasurementSet(Z, Y, float(meta.get("noise_sigma", 0.0)), meta)


def save_variable_set(directory, A):
    """Store the distinct cluster operators plus the frame-to-cluster map."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for j, op in enumerate(A.clusters):
        save_operator(d / f"C_{j:03d}", op)
    if A.clusters[0].kind == "fourier-lines":
        write_lines(d / "frames.lines", A.clusters[0].shape,
                    [op.locations for op in A.operators])
    write_kv(d / "clusters", {"scheme": A.scheme, "p": A.p,
                              "truncated": int(A.truncated),
                              "cluster_map": " ".join(map(str, A.cluster_map))})


def load_variable_set(directory):
    d = Path(directory)
    info = read_kv(d / "clusters")
    p = int(info["p"])
    clusters = []
    for j in range(p):
        stem = d / f"C_{j:03d}"
        path = stem.with_suffix(".fmx")
        clusters.append(load_operator(path if path.exists() else stem.with_suffix(".lines")))
    cmap = np.array(info["cluster_map"].split(), dtype=int)
    return VariableOperatorSet(clusters, cmap, info["scheme"], bool(int(info["truncated"])))
