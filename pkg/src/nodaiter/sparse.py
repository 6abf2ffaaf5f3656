"""Compressed sparse row storage, matrix-free operators and Matrix Market I/O."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from nodaiter import _kernels
from nodaiter.errors import (
    DimensionError,
    NonPositiveDenominator,
    ParseError,
    UnsupportedFormat,
)

__all__ = [
    "SparseMatrix",
    "matvec",
    "apply",
    "ratio_extrema",
    "norm1",
    "norm_inf",
    "norm2",
    "augment",
    "read_matrix_market",
    "write_matrix_market",
    "Plain",
    "ShiftedMonotone",
    "ShiftedNonneg",
    "Augmented",
    "BorderedMonotone",
    "BorderedNonneg",
]


def _as_vector(v):
    return np.ascontiguousarray(v, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Real CSR matrix with sorted, duplicate-free, zero-free rows.

    Build instances with :meth:`from_coo` or :meth:`from_dense`; the raw
    constructor trusts its arguments (use :meth:`check` to validate).
    """

    nrows: int
    ncols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        for name in ("row_offsets", "col_indices", "values"):
            getattr(self, name).setflags(write=False)

    @classmethod
    def from_coo(cls, nrows, ncols, rows, cols, vals):
        """Assemble from triplets; duplicates are summed and zeros dropped."""
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=np.float64).ravel()
        if not (rows.shape == cols.shape == vals.shape):
            raise DimensionError("triplet arrays differ in length")
        if rows.size and (
            rows.min() < 0 or rows.max() >= nrows or cols.min() < 0 or cols.max() >= ncols
        ):
            raise DimensionError("triplet index out of range")
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite matrix entry")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            key = rows * ncols + cols
            first = np.ones(key.size, dtype=bool)
            first[1:] = key[1:] != key[:-1]
            starts = np.flatnonzero(first)
            # duplicates summed in file order within the stable sort
            vals = np.add.reduceat(vals, starts) if starts.size else vals
            rows, cols = rows[starts], cols[starts]
            keep = vals != 0.0
            rows, cols, vals = rows[keep], cols[keep], vals[keep]
        offsets = np.zeros(nrows + 1, dtype=np.int64)
        np.add.at(offsets, rows + 1, 1)
        np.cumsum(offsets, out=offsets)
        return cls(int(nrows), int(ncols), offsets, cols.copy(), vals.copy())

    @classmethod
    def from_dense(cls, a):
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2:
            raise DimensionError("expected a 2-d array")
        rows, cols = np.nonzero(a)
        return cls.from_coo(a.shape[0], a.shape[1], rows, cols, a[rows, cols])

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    @property
    def nnz(self):
        return int(self.values.shape[0])

    def check(self):
        """Raise ``ValueError`` if the canonical-form invariants are broken."""
        ro, ci = self.row_offsets, self.col_indices
        if ro.shape != (self.nrows + 1,) or ro[0] != 0 or ro[-1] != self.values.size:
            raise ValueError("bad row_offsets")
        if np.any(np.diff(ro) < 0):
            raise ValueError("row_offsets not nondecreasing")
        if ci.size != self.values.size:
            raise ValueError("col_indices/values length mismatch")
        if ci.size and (ci.min() < 0 or ci.max() >= self.ncols):
            raise ValueError("column index out of range")
        for i in range(self.nrows):
            if np.any(np.diff(ci[ro[i] : ro[i + 1]]) <= 0):
                raise ValueError(f"row {i} columns not strictly increasing")
        if np.any(self.values == 0.0):
            raise ValueError("explicit zero stored")

    def row_indices(self):
        return np.repeat(np.arange(self.nrows, dtype=np.int64), np.diff(self.row_offsets))

    def to_dense(self):
        out = np.zeros(self.shape)
        out[self.row_indices(), self.col_indices] = self.values
        return out

    @cached_property
    def T(self):
        return SparseMatrix.from_coo(
            self.ncols, self.nrows, self.col_indices, self.row_indices(), self.values
        )

    @cached_property
    def is_symmetric(self):
        """Exact entrywise symmetry."""
        if self.nrows != self.ncols:
            return False
        t = self.T
        return (
            np.array_equal(self.row_offsets, t.row_offsets)
            and np.array_equal(self.col_indices, t.col_indices)
            and np.array_equal(self.values, t.values)
        )

    @cached_property
    def norm_scale(self):
        """``sqrt(||A||_1 * ||A||_inf)``, the outer-residual normaliser."""
        return math.sqrt(norm1(self) * norm_inf(self))

    def __matmul__(self, v):
        return matvec(self, v)

    def __repr__(self):
        return f"SparseMatrix({self.nrows}x{self.ncols}, nnz={self.nnz})"


def matvec(m, v):
    """``m @ v`` with per-row ascending-column summation."""
    v = _as_vector(v)
    if v.ndim != 1 or v.shape[0] != m.ncols:
        raise DimensionError(f"matrix has {m.ncols} columns, vector has length {v.shape}")
    return _kernels.csr_matvec(m.row_offsets, m.col_indices, m.values, v)


def norm1(m):
    """Vector 1-norm, or matrix 1-norm (max absolute column sum)."""
    if isinstance(m, SparseMatrix):
        if m.nnz == 0:
            return 0.0
        return float(np.bincount(m.col_indices, np.abs(m.values), minlength=m.ncols).max())
    return float(np.sum(np.abs(m)))


def norm_inf(m):
    """Vector max-norm, or matrix infinity-norm (max absolute row sum)."""
    if isinstance(m, SparseMatrix):
        if m.nnz == 0:
            return 0.0
        return float(np.bincount(m.row_indices(), np.abs(m.values), minlength=m.nrows).max())
    return float(np.max(np.abs(m))) if np.size(m) else 0.0


def norm2(v):
    """Euclidean norm of a vector; matrix 2-norms are never needed."""
    if isinstance(v, SparseMatrix):
        raise TypeError("matrix 2-norm is not provided")
    return float(np.linalg.norm(v))


def ratio_extrema(w, v):
    """Return ``(min(w/v), max(w/v))`` over components, for ``v > 0``."""
    w = _as_vector(w)
    v = _as_vector(v)
    if w.shape != v.shape or w.ndim != 1 or w.size == 0:
        raise DimensionError("ratio_extrema needs two nonempty vectors of equal length")
    if not np.all(v > 0):
        raise NonPositiveDenominator(f"denominator has min {v.min()!r}")
    lo, hi = _kernels.ratio_extrema_kernel(w, v)
    return float(lo), float(hi)


def augment(m):
    """The symmetric block matrix ``[[0, M], [M^T, 0]]``."""
    if m.nrows != m.ncols:
        raise DimensionError("augment expects a square matrix")
    n = m.nrows
    r = m.row_indices()
    c = m.col_indices
    rows = np.concatenate([r, c + n])
    cols = np.concatenate([c + n, r])
    vals = np.concatenate([m.values, m.values])
    return SparseMatrix.from_coo(2 * n, 2 * n, rows, cols, vals)


# -- matrix-free operators -------------------------------------------------


class Operator:
    dim: int
    symmetric: bool = False

    def apply(self, v):
        v = _as_vector(v)
        if v.ndim != 1 or v.shape[0] != self.dim:
            raise DimensionError(
                f"{type(self).__name__} acts on length {self.dim}, got {v.shape}"
            )
        return self._apply(v)

    __call__ = apply


def _square(a):
    if a.nrows != a.ncols:
        raise DimensionError("operator needs a square matrix")
    return a.nrows


@dataclass(eq=False)
class Plain(Operator):
    a: SparseMatrix

    def __post_init__(self):
        self.dim = _square(self.a)
        self.symmetric = self.a.is_symmetric

    def _apply(self, v):
        return matvec(self.a, v)


@dataclass(eq=False)
class ShiftedMonotone(Operator):
    """``v -> lam * A v - v``."""

    lam: float
    a: SparseMatrix

    def __post_init__(self):
        self.dim = _square(self.a)
        self.symmetric = self.a.is_symmetric

    def _apply(self, v):
        return self.lam * matvec(self.a, v) - v


@dataclass(eq=False)
class ShiftedNonneg(Operator):
    """``v -> lam * v - B v``."""

    lam: float
    b: SparseMatrix

    def __post_init__(self):
        self.dim = _square(self.b)
        self.symmetric = self.b.is_symmetric

    def _apply(self, v):
        return self.lam * v - matvec(self.b, v)


@dataclass(eq=False)
class Augmented(Operator):
    """``[[0, M], [M^T, 0]]`` applied without assembling it."""

    m: SparseMatrix

    def __post_init__(self):
        self.dim = 2 * _square(self.m)
        self.symmetric = True

    def _apply(self, v):
        n = self.m.nrows
        return np.concatenate([matvec(self.m, v[n:]), matvec(self.m.T, v[:n])])


@dataclass(eq=False)
class BorderedMonotone(Operator):
    """``[[I - lam A, -A x], [-x^T, 0]]`` acting on ``(dy, delta)``."""

    lam: float
    a: SparseMatrix
    x: np.ndarray
    ax: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        n = _square(self.a)
        self.x = _as_vector(self.x)
        if self.x.shape != (n,):
            raise DimensionError("border vector length mismatch")
        if self.ax is None:
            self.ax = matvec(self.a, self.x)
        self.dim = n + 1

    def _apply(self, v):
        dy, delta = v[:-1], v[-1]
        top = dy - self.lam * matvec(self.a, dy) - delta * self.ax
        return np.append(top, -np.dot(self.x, dy))


@dataclass(eq=False)
class BorderedNonneg(Operator):
    """``[[B - lam I, -x], [-x^T, 0]]`` acting on ``(dy, delta)``."""

    lam: float
    b: SparseMatrix
    x: np.ndarray

    def __post_init__(self):
        n = _square(self.b)
        self.x = _as_vector(self.x)
        if self.x.shape != (n,):
            raise DimensionError("border vector length mismatch")
        self.dim = n + 1

    def _apply(self, v):
        dy, delta = v[:-1], v[-1]
        top = matvec(self.b, dy) - self.lam * dy - delta * self.x
        return np.append(top, -np.dot(self.x, dy))


def apply(op, v):
    return op.apply(v)


# -- Matrix Market ---------------------------------------------------------


def read_matrix_market(path):
    """Load a real coordinate Matrix Market file (general or symmetric)."""
    path = Path(path)
    with path.open("r") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", 1)
    header = lines[0].split()
    if len(header) != 5 or header[0].lower() != "%%matrixmarket":
        raise ParseError("missing %%MatrixMarket header", 1)
    obj, fmt, dtype, sym = (h.lower() for h in header[1:])
    if obj != "matrix" or fmt != "coordinate":
        raise UnsupportedFormat(f"only 'matrix coordinate' is supported, got {obj} {fmt}")
    if dtype not in ("real", "integer", "double"):
        raise UnsupportedFormat(f"unsupported field {dtype!r}")
    if sym not in ("general", "symmetric"):
        raise UnsupportedFormat(f"unsupported symmetry {sym!r}")

    lineno = 1
    size = None
    rows, cols, vals = [], [], []
    count = 0
    for raw in lines[1:]:
        lineno += 1
        s = raw.strip()
        if not s or s.startswith("%"):
            continue
        parts = s.split()
        if size is None:
            if len(parts) != 3:
                raise ParseError("size line needs 'rows cols nnz'", lineno)
            try:
                size = tuple(int(p) for p in parts)
            except ValueError:
                raise ParseError(f"bad size line {s!r}", lineno) from None
            continue
        if len(parts) != 3:
            raise ParseError(f"expected 'i j value', got {s!r}", lineno)
        try:
            i, j, val = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError(f"cannot parse entry {s!r}", lineno) from None
        if not (1 <= i <= size[0] and 1 <= j <= size[1]):
            raise ParseError(f"index ({i}, {j}) outside {size[0]}x{size[1]}", lineno)
        if not math.isfinite(val):
            raise ParseError("non-finite value", lineno)
        count += 1
        rows.append(i - 1)
        cols.append(j - 1)
        vals.append(val)
        if sym == "symmetric" and i != j:
            rows.append(j - 1)
            cols.append(i - 1)
            vals.append(val)
    if size is None:
        raise ParseError("missing size line", lineno)
    if count != size[2]:
        raise ParseError(f"header announces {size[2]} entries, found {count}", lineno)
    return SparseMatrix.from_coo(size[0], size[1], rows, cols, vals)


def write_matrix_market(m, path):
    """Write in general coordinate form with 17 significant digits."""
    path = Path(path)
    r = m.row_indices() + 1
    c = m.col_indices + 1
    with path.open("w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{m.nrows} {m.ncols} {m.nnz}\n")
        for i, j, v in zip(r.tolist(), c.tolist(), m.values.tolist()):
            fh.write(f"{i} {j} {v:.17g}\n")
