"""Reader/writer for the FMX v1 matrix file format.

An FMX file is one ASCII header line ``fmx 1 <dtype> <rows> <cols>`` followed
by the row-major little-endian IEEE-754 payload. ``dtype`` is ``f64`` for real
matrices and ``c64`` for complex ones (interleaved real, imaginary doubles).
"""

from pathlib import Path

import numpy as np

__all__ = ["write_fmx", "read_fmx", "FMXError"]

_DTYPES = {"f64": np.dtype("<f8"), "c64": np.dtype("<c16")}


class FMXError(ValueError):
    """Malformed FMX file."""


def write_fmx(path, A):
    """Write a 1D or 2D array to `path`. Vectors are stored as a column."""
    A = np.asarray(A)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise FMXError(f"FMX stores matrices, got array with ndim={A.ndim}")
    tag = "c64" if np.iscomplexobj(A) else "f64"
    payload = np.ascontiguousarray(A, dtype=_DTYPES[tag]).tobytes(order="C")
    header = f"fmx 1 {tag} {A.shape[0]} {A.shape[1]}\n".encode("ascii")
    Path(path).write_bytes(header + payload)


def read_fmx(path):
    """Read an FMX file into a 2D ndarray (float64 or complex128)."""
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise FMXError(f"{path}: missing header line")
    parts = raw[:nl].decode("ascii", errors="replace").split()
    if len(parts) != 5 or parts[0] != "fmx" or parts[1] != "1":
        raise FMXError(f"{path}: bad header {raw[:nl]!r}")
    tag = parts[2]
    if tag not in _DTYPES:
        raise FMXError(f"{path}: unknown dtype {tag!r}")
    rows, cols = int(parts[3]), int(parts[4])
    dt = _DTYPES[tag]
    body = raw[nl + 1:]
    if len(body) != rows * cols * dt.itemsize:
        raise FMXError(
            f"{path}: payload has {len(body)} bytes, expected "
            f"{rows * cols * dt.itemsize}")
    A = np.frombuffer(body, dtype=dt).reshape(rows, cols)
    return A.astype(dt.newbyteorder("="))
