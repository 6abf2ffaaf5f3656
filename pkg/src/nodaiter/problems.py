"""Seeded generators for irreducible monotone test matrices.

Random streams come from numpy's PCG64 bit generator. Raw 64-bit outputs are
mapped to doubles as ``(u >> 11) * 2**-53``, so a seed yields the same
numbers on every platform and numpy release.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from nodaiter.errors import DisconnectedGraph, GenerationFailed
from nodaiter.sparse import SparseMatrix, augment

__all__ = [
    "uniform_stream",
    "laplacian_2d",
    "laplacian_2d_sigma_min",
    "tridiag_m_matrix",
    "tridiag_sigma_min",
    "graph_adjacency",
    "graph_m_matrix",
    "m_product",
    "is_connected",
    "is_z_matrix",
    "ProblemSpec",
    "build",
]


def uniform_stream(seed, size):
    """``size`` doubles in [0, 1) from PCG64(seed)."""
    raw = np.random.PCG64(seed).random_raw(size)
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53


def laplacian_2d(m):
    """5-point Dirichlet Laplacian on an ``m x m`` interior grid (``n = m**2``)."""
    if m < 2:
        raise ValueError("grid size must be >= 2")
    idx = np.arange(m * m).reshape(m, m)
    rows = [idx.ravel()]
    cols = [idx.ravel()]
    vals = [np.full(m * m, 4.0)]
    for a, b in ((idx[:, :-1], idx[:, 1:]), (idx[:-1, :], idx[1:, :])):
        a, b = a.ravel(), b.ravel()
        rows += [a, b]
        cols += [b, a]
        vals += [np.full(a.size, -1.0)] * 2
    return SparseMatrix.from_coo(
        m * m, m * m, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    )


def laplacian_2d_sigma_min(m):
    return 8.0 * math.sin(math.pi / (2 * (m + 1))) ** 2


def tridiag_m_matrix(n):
    """``tridiag(-1, 2, -1)`` of order ``n``."""
    if n < 2:
        raise ValueError("n must be >= 2")
    i = np.arange(n)
    rows = np.concatenate([i, i[:-1], i[1:]])
    cols = np.concatenate([i, i[1:], i[:-1]])
    vals = np.concatenate([np.full(n, 2.0), np.full(2 * (n - 1), -1.0)])
    return SparseMatrix.from_coo(n, n, rows, cols, vals)


def tridiag_sigma_min(n):
    return 2.0 - 2.0 * math.cos(math.pi / (n + 1))


def is_connected(m):
    """Traversal of the symmetrised sparsity pattern."""
    n = m.nrows
    if n == 0:
        return True
    sym = SparseMatrix.from_coo(
        n,
        n,
        np.concatenate([m.row_indices(), m.col_indices]),
        np.concatenate([m.col_indices, m.row_indices()]),
        np.ones(2 * m.nnz),
    )
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    ro, ci = sym.row_offsets, sym.col_indices
    while queue:
        i = queue.popleft()
        for j in ci[ro[i] : ro[i + 1]]:
            if not seen[j]:
                seen[j] = True
                queue.append(j)
    return bool(seen.all())


def is_z_matrix(m):
    off = m.row_indices() != m.col_indices
    return bool(np.all(m.values[off] <= 0))


def graph_adjacency(n, radius, seed):
    """Binary adjacency of a random geometric graph in the unit square."""
    pts = uniform_stream(seed, 2 * n).reshape(n, 2)
    pairs = cKDTree(pts).query_pairs(radius, output_type="ndarray")
    if pairs.size:
        d = np.linalg.norm(pts[pairs[:, 0]] - pts[pairs[:, 1]], axis=1)
        pairs = pairs[d < radius]
    i, j = pairs[:, 0], pairs[:, 1]
    return SparseMatrix.from_coo(
        n, n, np.concatenate([i, j]), np.concatenate([j, i]), np.ones(2 * len(i))
    )


def graph_m_matrix(n, radius, sigma_slack, seed, max_attempts=20):
    """``sigma I - B`` for a connected random geometric graph ``B``.

    ``sigma`` is the largest row sum of ``B`` plus ``sigma_slack``, which
    bounds ``rho(B)`` from above. Disconnected samples are redrawn with
    ``seed + 1``, ``seed + 2``, ...
    """
    if n < 2 or radius <= 0 or sigma_slack <= 0:
        raise ValueError("need n >= 2, radius > 0, sigma_slack > 0")
    for attempt in range(max_attempts):
        b = graph_adjacency(n, radius, seed + attempt)
        if is_connected(b):
            break
    else:
        raise DisconnectedGraph(
            f"no connected graph for n={n}, radius={radius} in {max_attempts} seeds"
        )
    rowsum = np.bincount(b.row_indices(), b.values, minlength=n)
    sigma = float(rowsum.max()) + sigma_slack
    idx = np.arange(n)
    return SparseMatrix.from_coo(
        n,
        n,
        np.concatenate([idx, b.row_indices()]),
        np.concatenate([idx, b.col_indices]),
        np.concatenate([np.full(n, sigma), -b.values]),
    )


def _random_tridiag_m(n, seed):
    u = uniform_stream(seed, 3 * n)
    lower = -(0.5 + u[: n - 1])
    upper = -(0.5 + u[n : 2 * n - 1])
    margin = 0.1 + u[2 * n :]
    diag = margin.copy()
    diag[1:] += -lower
    diag[:-1] += -upper
    i = np.arange(n)
    return SparseMatrix.from_coo(
        n,
        n,
        np.concatenate([i, i[1:], i[:-1]]),
        np.concatenate([i, i[:-1], i[1:]]),
        np.concatenate([diag, lower, upper]),
    )


def sparse_product(a, b):
    """``a @ b`` for small CSR matrices, assembled row by row."""
    rows, cols, vals = [], [], []
    bro, bci, bv = b.row_offsets, b.col_indices, b.values
    for i in range(a.nrows):
        acc = {}
        for p in range(a.row_offsets[i], a.row_offsets[i + 1]):
            k, aik = a.col_indices[p], a.values[p]
            for q in range(bro[k], bro[k + 1]):
                acc[bci[q]] = acc.get(bci[q], 0.0) + aik * bv[q]
        for j, v in acc.items():
            rows.append(i)
            cols.append(j)
            vals.append(v)
    return SparseMatrix.from_coo(a.nrows, b.ncols, rows, cols, vals)


def m_product(n, seed, max_attempts=10):
    """Product of two seeded diagonally dominant tridiagonal M-matrices.

    The product is monotone; samples that happen to be Z-matrices (always the
    case for ``n == 2``) are redrawn.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    for attempt in range(max_attempts):
        s = seed + attempt
        p = sparse_product(_random_tridiag_m(n, 2 * s), _random_tridiag_m(n, 2 * s + 1))
        if not is_z_matrix(p):
            return p
    raise GenerationFailed(f"every product was a Z-matrix after {max_attempts} attempts")


# -- problem specs ----------------------------------------------------------

_KINDS = ("laplacian2d", "graph", "tridiag", "mproduct", "augmented_svd")


@dataclass
class ProblemSpec:
    kind: str
    params: dict = field(default_factory=dict)
    inner: ProblemSpec | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}; choose from {_KINDS}")
        if self.kind == "augmented_svd" and self.inner is None:
            raise ValueError("augmented_svd needs an 'inner' problem")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("kind")
        inner = d.pop("inner", None)
        if inner is not None:
            inner = cls.from_dict(inner)
        return cls(kind, d, inner)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_dict(self):
        out = {"kind": self.kind, **self.params}
        if self.inner is not None:
            out["inner"] = self.inner.to_dict()
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @property
    def description(self):
        if self.kind == "augmented_svd":
            return f"augmented [[0, M], [M^T, 0]] of {self.inner.description}"
        args = ", ".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.kind}({args})"


def build(spec):
    """Return ``(matrix, known_sigma_min)``; the second is ``None`` if unknown."""
    if isinstance(spec, dict):
        spec = ProblemSpec.from_dict(spec)
    p = spec.params
    if spec.kind == "laplacian2d":
        m = int(p["m"])
        return laplacian_2d(m), laplacian_2d_sigma_min(m)
    if spec.kind == "tridiag":
        n = int(p["n"])
        return tridiag_m_matrix(n), tridiag_sigma_min(n)
    if spec.kind == "graph":
        mat = graph_m_matrix(
            int(p["n"]), float(p["radius"]), float(p.get("sigma_slack", 0.5)), int(p.get("seed", 0))
        )
        return mat, None
    if spec.kind == "mproduct":
        return m_product(int(p["n"]), int(p.get("seed", 0))), None
    inner, sigma = build(spec.inner)
    return augment(inner), sigma
