"""Dense reference computations for small problems.

Nothing here touches the sparse kernels or the Krylov solvers, so these
results can be used to check them.
"""
import numpy as np

from nodaiter.errors import NoConvergence, SingularMatrix, SizeGuard

__all__ = [
    "dense_lu_factor",
    "dense_lu_solve",
    "dense_inverse",
    "perron_power",
    "sigma_min_oracle",
    "count_eigenvalues_below",
    "sigma_min_bisection",
    "MAX_DENSE",
]

MAX_DENSE = 512
_TINY_PIVOT = 1e-300


def _dense(a):
    if hasattr(a, "to_dense"):
        a = a.to_dense()
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    return a


def dense_lu_factor(a):
    """Doolittle LU with partial pivoting. Returns ``(lu, perm)``."""
    lu = _dense(a)
    n = lu.shape[0]
    perm = np.arange(n)
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[p, k]) <= _TINY_PIVOT:
            raise SingularMatrix(f"zero pivot in column {k}")
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        lu[k + 1 :, k] /= lu[k, k]
        lu[k + 1 :, k + 1 :] -= np.outer(lu[k + 1 :, k], lu[k, k + 1 :])
    return lu, perm


def _lu_solve(lu, perm, b):
    n = lu.shape[0]
    x = np.array(b, dtype=np.float64)[perm]
    for i in range(1, n):
        x[i] -= lu[i, :i] @ x[:i]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - lu[i, i + 1 :] @ x[i + 1 :]) / lu[i, i]
    return x


def dense_lu_solve(a, b):
    lu, perm = dense_lu_factor(a)
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != lu.shape[0]:
        raise ValueError("right-hand side length mismatch")
    if b.ndim == 2:
        return np.column_stack([_lu_solve(lu, perm, col) for col in b.T])
    return _lu_solve(lu, perm, b)


def dense_inverse(a):
    a = _dense(a)
    if a.shape[0] > MAX_DENSE:
        raise SizeGuard(f"dense inverse refused for n={a.shape[0]} > {MAX_DENSE}")
    return dense_lu_solve(a, np.eye(a.shape[0]))


def perron_power(b, shift=1.0, rtol=1e-12, max_iter=10**6):
    """Perron root and vector of an irreducible nonnegative matrix.

    Iterates on ``B + shift*I`` (same Perron vector, no period) from the
    all-ones vector until ``max(Bv/v) - min(Bv/v) <= rtol * max(Bv/v)``.
    Returns the midpoint of the final bracket and the unit Perron vector.
    """
    b = _dense(b)
    if np.any(b < 0):
        raise ValueError("perron_power needs a nonnegative matrix")
    n = b.shape[0]
    v = np.ones(n) / np.sqrt(n)
    for _ in range(max_iter):
        bv = b @ v
        r = bv / v
        lo, hi = float(r.min()), float(r.max())
        if hi - lo <= rtol * abs(hi):
            return 0.5 * (lo + hi), v
        v = bv + shift * v
        v /= np.linalg.norm(v)
        if not np.all(v > 0):
            raise NoConvergence("iterate lost positivity (matrix reducible?)")
    raise NoConvergence(f"bracket did not collapse in {max_iter} iterations")


def sigma_min_oracle(a):
    """``1 / rho(A^-1)`` by dense inversion and power iteration."""
    inv = dense_inverse(a)
    if np.any(inv < -1e-12 * np.abs(inv).max()):
        raise ValueError("matrix is not monotone: inverse has negative entries")
    rho, _ = perron_power(np.maximum(inv, 0.0))
    return 1.0 / rho


def count_eigenvalues_below(m, s):
    """Number of eigenvalues of symmetric ``m`` below ``s`` (Sylvester inertia).

    Counts negative pivots of unpivoted elimination on ``m - s I``; the
    product of those pivots is ``det(m - s I)``.
    """
    a = _dense(m) - s * np.eye(m.shape[0] if hasattr(m, "shape") else len(m))
    n = a.shape[0]
    neg = 0
    for k in range(n):
        piv = a[k, k]
        if piv == 0.0:
            piv = 1e-300
        if piv < 0:
            neg += 1
        if k + 1 < n:
            a[k + 1 :, k + 1 :] -= np.outer(a[k + 1 :, k], a[k, k + 1 :]) / piv
    return neg


def sigma_min_bisection(m, lo, hi, tol=1e-13):
    """Smallest eigenvalue of symmetric positive definite ``m`` in ``(lo, hi]``."""
    m = _dense(m)
    if count_eigenvalues_below(m, hi) < 1:
        raise ValueError("no eigenvalue below the upper end of the interval")
    while hi - lo > tol * max(1.0, abs(hi)):
        mid = 0.5 * (lo + hi)
        if count_eigenvalues_below(m, mid) >= 1:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
