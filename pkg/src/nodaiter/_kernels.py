"""Hot loops: CSR products and elementwise ratio extrema.

Every kernel has a pure-numpy twin. Both paths accumulate each row in
ascending column order starting from ``0.0``, so they agree bit for bit.
"""
import numpy as np

from nodaiter._accel import HAVE_NUMBA, njit

__all__ = [
    "csr_matvec",
    "csr_matvec_numpy",
    "ratio_extrema_kernel",
    "ratio_extrema_numpy",
    "BACKEND",
    "warmup",
]


def _csr_matvec_loop(indptr, indices, data, x):
    n = indptr.shape[0] - 1
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        acc = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            acc += data[p] * x[indices[p]]
        out[i] = acc
    return out


def csr_matvec_numpy(indptr, indices, data, x):
    n = indptr.shape[0] - 1
    out = np.zeros(n, dtype=np.float64)
    if n == 0 or data.shape[0] == 0:
        return out
    starts = indptr[:-1]
    lengths = np.diff(indptr)
    # slot j of every row is added in pass j: same order as the scalar loop
    for j in range(int(lengths.max())):
        rows = np.flatnonzero(lengths > j)
        pos = starts[rows] + j
        out[rows] += data[pos] * x[indices[pos]]
    return out


def _ratio_extrema_loop(w, v):
    lo = w[0] / v[0]
    hi = lo
    for i in range(1, w.shape[0]):
        r = w[i] / v[i]
        if r < lo:
            lo = r
        if r > hi:
            hi = r
    return lo, hi


def ratio_extrema_numpy(w, v):
    r = w / v
    return float(r.min()), float(r.max())


if HAVE_NUMBA:
    csr_matvec_numba = njit(cache=False)(_csr_matvec_loop)
    ratio_extrema_numba = njit(cache=False)(_ratio_extrema_loop)
    csr_matvec = csr_matvec_numba
    ratio_extrema_kernel = ratio_extrema_numba
    BACKEND = "numba"
else:
    csr_matvec_numba = None
    ratio_extrema_numba = None
    csr_matvec = csr_matvec_numpy
    ratio_extrema_kernel = ratio_extrema_numpy
    BACKEND = "numpy"


def warmup():
    """Compile the numba kernels now so later timings exclude JIT cost."""
    indptr = np.array([0, 1], dtype=np.int64)
    indices = np.array([0], dtype=np.int64)
    one = np.ones(1)
    csr_matvec(indptr, indices, one, one)
    ratio_extrema_kernel(one, one)
