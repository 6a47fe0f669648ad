"""
Data containers and the implicit scaled, centered data operator.

The centered data matrix ``Y - 1 mean^T`` and the sample covariance ``S`` are
never materialized. Everything downstream touches the data only through the
products provided here.
"""

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DataFormatError",
    "ConstantColumnError",
    "DataSet",
    "ImplicitW",
    "ingest",
    "read_csv",
    "read_binary",
    "write_binary",
    "write_csv",
    "w_times",
    "wt_times",
    "diag_s",
    "centered_matmat",
    "centered_rmatmat",
    "SCALE_MODES",
]

BINARY_MAGIC = b"FADM"
BINARY_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")

SCALE_MODES = ("correlation", "covariance")

# rows per block when computing column statistics
_STAT_BLOCK = 4096


class DataFormatError(ValueError):
    """Raised when an input matrix cannot be parsed or is unusable."""


class ConstantColumnError(DataFormatError):
    """Raised when a column has zero sample variance."""

    def __init__(self, column):
        self.column = column
        super().__init__(f"column {column} is constant (zero variance)")


def _check_scale_mode(scale_mode):
    if scale_mode not in SCALE_MODES:
        raise ValueError(f"scale_mode must be one of {SCALE_MODES}, got {scale_mode!r}")


@dataclass(frozen=True, eq=False)
class DataSet:
    """An n x p observation matrix with cached column means and standard deviations.

    ``col_sd`` uses divisor n, matching ``S = (Y - 1 mean^T)^T (Y - 1 mean^T) / n``.
    Columns are numbered from 1 in error messages.
    """

    values: np.ndarray
    col_mean: np.ndarray
    col_sd: np.ndarray
    _diag_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]

    @classmethod
    def from_array(cls, values, copy=True):
        Y = np.array(values, dtype=np.float64, order="C", copy=copy)
        if Y.ndim != 2:
            raise DataFormatError(f"expected a 2-d matrix, got shape {Y.shape}")
        n, p = Y.shape
        if n < 2 or p < 1:
            raise DataFormatError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        bad = ~np.isfinite(Y)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise DataFormatError(f"non-finite value at row {i + 1}, column {j + 1}")
        mean = Y.mean(axis=0)
        ss = np.zeros(p)
        for start in range(0, n, _STAT_BLOCK):
            block = Y[start:start + _STAT_BLOCK] - mean
            ss += np.einsum("ij,ij->j", block, block)
        sd = np.sqrt(ss / n)
        scale = np.maximum(np.abs(mean), 1.0)
        const = sd <= 1e-14 * scale
        if const.any():
            raise ConstantColumnError(int(np.flatnonzero(const)[0]) + 1)
        Y.setflags(write=False)
        mean.setflags(write=False)
        sd.setflags(write=False)
        return cls(Y, mean, sd)

    def sample_sd(self, ddof=0):
        """Column standard deviations with divisor ``n - ddof`` (reporting only)."""
        return self.col_sd * np.sqrt(self.n / (self.n - ddof))


def read_csv(path, header=False):
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not row or all(not cell.strip() for cell in row):
                continue
            parsed = []
            for col, cell in enumerate(row, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise DataFormatError(
                        f"{path}: cannot parse {cell!r} at row {lineno}, column {col}"
                    ) from None
            if rows and len(parsed) != len(rows[0]):
                raise DataFormatError(
                    f"{path}: row {lineno} has {len(parsed)} fields, expected {len(rows[0])}"
                )
            rows.append(parsed)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def read_binary(path):
    path = Path(path)
    with path.open("rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise DataFormatError(f"{path}: truncated header")
        magic, version, n, p = _HEADER.unpack(head)
        if magic != BINARY_MAGIC:
            raise DataFormatError(f"{path}: bad magic {magic!r}")
        if version != BINARY_VERSION:
            raise DataFormatError(f"{path}: unsupported version {version}")
        values = np.fromfile(fh, dtype="<f8", count=n * p)
    if values.size != n * p:
        raise DataFormatError(f"{path}: expected {n * p} values, found {values.size}")
    return values.reshape(n, p).astype(np.float64, copy=False)


def write_binary(path, values):
    Y = np.ascontiguousarray(values, dtype="<f8")
    n, p = Y.shape
    with Path(path).open("wb") as fh:
        fh.write(_HEADER.pack(BINARY_MAGIC, BINARY_VERSION, n, p))
        Y.tofile(fh)


def write_csv(path, values, header=None):
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        if header is not None:
            writer.writerow(header)
        for row in values:
            writer.writerow([repr(float(x)) for x in row])


def ingest(path, format=None, header=False):
    """Load a matrix file into a :class:`DataSet`.

    ``format`` is ``"csv"`` or ``"binary"``; when omitted it is inferred from the
    file extension (``.csv``/``.txt`` are CSV, anything else binary).
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if format is None:
        format = "csv" if path.suffix.lower() in (".csv", ".txt") else "binary"
    if format == "csv":
        values = read_csv(path, header=header)
    elif format == "binary":
        values = read_binary(path)
    else:
        raise ValueError(f"unknown format {format!r}")
    return DataSet.from_array(values, copy=False)


def diag_s(data, scale_mode="correlation"):
    """Diagonal of S on the requested scale; ones on the correlation scale."""
    _check_scale_mode(scale_mode)
    cached = data._diag_cache.get(scale_mode)
    if cached is None:
        if scale_mode == "correlation":
            cached = np.ones(data.p)
        else:
            cached = data.col_sd**2
        cached.setflags(write=False)
        data._diag_cache[scale_mode] = cached
    return cached


def _column_scale(data, scale_mode):
    if scale_mode == "correlation":
        return 1.0 / data.col_sd
    return None


def centered_matmat(data, X, scale_mode="correlation"):
    """Return ``Yc X`` where Yc is the centered (and, on the correlation scale,
    standardized) data. ``X`` is p x k or length p."""
    _check_scale_mode(scale_mode)
    X = np.asarray(X, dtype=np.float64)
    c = _column_scale(data, scale_mode)
    if c is not None:
        X = (c * X.T).T
    out = data.values @ X
    out -= data.col_mean @ X
    return out


def centered_rmatmat(data, U, scale_mode="correlation"):
    """Return ``Yc^T U`` for U of shape n x k or length n."""
    _check_scale_mode(scale_mode)
    U = np.asarray(U, dtype=np.float64)
    out = data.values.T @ U
    out -= np.multiply.outer(data.col_mean, U.sum(axis=0))
    c = _column_scale(data, scale_mode)
    if c is not None:
        out = (c * out.T).T
    return out


class ImplicitW:
    """The operator ``W = n^{-1/2} (Y - 1 mean^T) D^{-1/2} Psi^{-1/2}`` applied lazily.

    ``D`` is the diagonal of S on the correlation scale and the identity on the
    covariance scale. Exposes ``shape``, ``matvec`` and ``rmatvec`` so it can be
    handed to :func:`fad.lanczos.partial_svd` like any linear operator.
    """

    def __init__(self, data, psi=None, scale_mode="correlation"):
        _check_scale_mode(scale_mode)
        self.data = data
        self.scale_mode = scale_mode
        if psi is None:
            psi_inv_sqrt = np.ones(data.p)
        else:
            psi = np.asarray(psi, dtype=np.float64)
            if psi.shape != (data.p,):
                raise ValueError(f"psi must have shape ({data.p},), got {psi.shape}")
            if np.any(psi <= 0):
                raise ValueError("psi entries must be positive")
            psi_inv_sqrt = 1.0 / np.sqrt(psi)
        self.psi_inv_sqrt = psi_inv_sqrt
        col = psi_inv_sqrt / np.sqrt(data.n)
        if scale_mode == "correlation":
            col = col / data.col_sd
        self._col = col
        # scalar offset vector so that centering is a single dot product
        self._mean_col = data.col_mean * col
        self.shape = (data.n, data.p)
        self.dtype = np.dtype(np.float64)

    def matvec(self, v):
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.shape[1],):
            raise ValueError(f"expected vector of length {self.shape[1]}, got shape {v.shape}")
        x = self._col * v
        out = self.data.values @ x
        out -= self._mean_col @ v
        return out

    def rmatvec(self, u):
        u = np.asarray(u, dtype=np.float64)
        if u.shape != (self.shape[0],):
            raise ValueError(f"expected vector of length {self.shape[0]}, got shape {u.shape}")
        z = self.data.values.T @ u
        z *= self._col
        z -= self._mean_col * u.sum()
        return z

    def to_dense(self):
        """Explicit W, for small problems and testing."""
        return np.column_stack([self.matvec(e) for e in np.eye(self.shape[1])])


def w_times(v, op):
    return op.matvec(v)


def wt_times(u, op):
    return op.rmatvec(u)
