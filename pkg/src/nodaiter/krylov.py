"""Unpreconditioned Krylov solvers with an absolute residual contract.

All solvers start from the zero vector and report the *true* residual
``||op(y) - b||_2`` of the returned iterate, recomputed at exit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from nodaiter.errors import DimensionError, SingularBorder
from nodaiter.sparse import BorderedMonotone, BorderedNonneg

__all__ = [
    "InnerConfig",
    "InnerSolveOutcome",
    "solve_symmetric",
    "solve_general",
    "solve_bordered",
    "BORDERED_TOL",
]

_EPS = np.finfo(float).eps
BORDERED_TOL = 1e-13

CONVERGED = "converged"
MAX_ITERATIONS = "max_iterations"
BREAKDOWN = "breakdown"
STAGNATION = "stagnation"


@dataclass(frozen=True)
class InnerConfig:
    tol_abs: float = 1e-10
    max_iterations: int = 20000
    restart: int = 50

    def __post_init__(self):
        if not self.tol_abs > 0:
            raise ValueError("tol_abs must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.restart < 1:
            raise ValueError("restart must be >= 1")

    def with_tol(self, tol):
        return replace(self, tol_abs=float(tol))


@dataclass
class InnerSolveOutcome:
    y: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    status: str = CONVERGED
    # solver's own residual estimates, one per iteration
    history: list = field(default_factory=list, repr=False)


def _rhs(op, b):
    b = np.ascontiguousarray(b, dtype=np.float64)
    if b.ndim != 1 or b.shape[0] != op.dim:
        raise DimensionError(f"right-hand side has shape {b.shape}, operator dim {op.dim}")
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand side is not finite")
    return b


def _true_residual(op, y, b):
    return float(np.linalg.norm(op.apply(y) - b))


def _probe_symmetry(op, n_pairs=3):
    rng = np.random.default_rng(12345)
    for _ in range(n_pairs):
        u = rng.standard_normal(op.dim)
        v = rng.standard_normal(op.dim)
        lhs = float(np.dot(op.apply(u), v))
        rhs = float(np.dot(u, op.apply(v)))
        scale = np.linalg.norm(op.apply(u)) * np.linalg.norm(v) + 1e-300
        if abs(lhs - rhs) > 1e-10 * scale:
            raise ValueError("operator failed the symmetry probe")


def solve_symmetric(op, b, cfg):
    """MINRES for a symmetric, possibly indefinite operator.

    Stops once the true residual is at most ``cfg.tol_abs``. When rounding
    keeps the true residual above the target although the recurrence
    estimate is below it, iteration continues while that still helps and the
    best iterate is returned with ``status="stagnation"``.
    """
    b = _rhs(op, b)
    if __debug__:
        _probe_symmetry(op)
    tol = cfg.tol_abs
    n = op.dim
    x = np.zeros(n)
    beta1 = float(np.linalg.norm(b))
    if beta1 <= tol:
        return InnerSolveOutcome(x, beta1, 0, True)

    r1 = b.copy()
    r2 = b.copy()
    y = b.copy()
    w = np.zeros(n)
    w2 = np.zeros(n)
    oldb = 0.0
    beta = beta1
    dbar = 0.0
    epsln = 0.0
    phibar = beta1
    cs, sn = -1.0, 0.0
    history = []

    best_x, best_res = x.copy(), beta1
    next_check = tol
    status = MAX_ITERATIONS
    itn = 0
    while itn < cfg.max_iterations:
        itn += 1
        v = y / beta
        y = op.apply(v)
        if itn >= 2:
            y = y - (beta / oldb) * r1
        alfa = float(np.dot(v, y))
        y = y - (alfa / beta) * r2
        r1, r2 = r2, y
        oldb = beta
        beta = float(np.linalg.norm(y))

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(math.hypot(gbar, beta), _EPS)
        cs = gbar / gamma
        sn = beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1, w2 = w2, w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w
        history.append(abs(phibar))

        lanczos_done = beta <= _EPS * oldb
        if abs(phibar) <= next_check or lanczos_done:
            res = _true_residual(op, x, b)
            if res <= tol:
                return InnerSolveOutcome(x, res, itn, True, CONVERGED, history)
            if res < 0.5 * best_res:
                best_x, best_res = x.copy(), res
                next_check = 0.1 * abs(phibar)
            else:
                if res < best_res:
                    best_x, best_res = x.copy(), res
                status = STAGNATION
                break
            if lanczos_done:
                status = BREAKDOWN
                break
    else:
        res = _true_residual(op, x, b)
        if res < best_res:
            best_x, best_res = x, res
    return InnerSolveOutcome(best_x, best_res, itn, False, status, history)


def solve_general(op, b, cfg):
    """Restarted GMRES with two-pass classical Gram-Schmidt.

    A restart cycle that fails to cut the true residual by at least 1%
    ends the solve with ``status="stagnation"``.
    """
    b = _rhs(op, b)
    tol = cfg.tol_abs
    n = op.dim
    m = min(cfg.restart, n)
    x = np.zeros(n)
    r = b.copy()
    res = float(np.linalg.norm(r))
    history = []
    total = 0
    if res <= tol:
        return InnerSolveOutcome(x, res, 0, True)

    V = np.empty((m + 1, n))
    H = np.zeros((m + 1, m))
    while True:
        V[0] = r / res
        g = np.zeros(m + 1)
        g[0] = res
        cs = np.zeros(m)
        sn = np.zeros(m)
        k = 0
        for j in range(m):
            wv = op.apply(V[j])
            h = V[: j + 1] @ wv
            wv -= h @ V[: j + 1]
            h2 = V[: j + 1] @ wv
            wv -= h2 @ V[: j + 1]
            h += h2
            hnext = float(np.linalg.norm(wv))
            col = np.zeros(m + 1)
            col[: j + 1] = h
            col[j + 1] = hnext
            for i in range(j):
                t = cs[i] * col[i] + sn[i] * col[i + 1]
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1]
                col[i] = t
            denom = math.hypot(col[j], col[j + 1])
            if denom == 0.0:
                cs[j], sn[j] = 1.0, 0.0
            else:
                cs[j], sn[j] = col[j] / denom, col[j + 1] / denom
            col[j] = denom
            col[j + 1] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            H[:, j] = col
            k = j + 1
            total += 1
            history.append(abs(g[j + 1]))
            happy = hnext <= _EPS * max(1.0, abs(denom))
            if not happy:
                V[j + 1] = wv / hnext
            if happy or abs(g[j + 1]) <= tol or total >= cfg.max_iterations:
                break

        Hk = H[:k, :k]
        diag = np.abs(np.diag(Hk))
        if diag.size and diag.min() == 0.0:
            keep = diag > 0
            ycoef = np.zeros(k)
            ycoef[keep] = np.linalg.lstsq(Hk[:, keep], g[:k], rcond=None)[0]
        else:
            ycoef = _back_substitute(Hk, g[:k])
        x = x + ycoef @ V[:k]
        r = b - op.apply(x)
        new_res = float(np.linalg.norm(r))
        if new_res <= tol:
            return InnerSolveOutcome(x, new_res, total, True, CONVERGED, history)
        if total >= cfg.max_iterations:
            return InnerSolveOutcome(x, new_res, total, False, MAX_ITERATIONS, history)
        if new_res > 0.99 * res:
            return InnerSolveOutcome(x, new_res, total, False, STAGNATION, history)
        res = new_res


def _back_substitute(R, g):
    k = R.shape[0]
    out = np.zeros(k)
    for i in range(k - 1, -1, -1):
        out[i] = (g[i] - R[i, i + 1 :] @ out[i + 1 :]) / R[i, i]
    return out


def solve_bordered(op, rhs, cfg):
    """Solve a bordered ``(n+1)``-system to ``max(1e-13, 1e-13*||rhs||)``.

    The packed solution is ``(dy, delta)``.
    """
    if not isinstance(op, (BorderedMonotone, BorderedNonneg)):
        raise TypeError("solve_bordered needs a bordered operator")
    rhs = _rhs(op, rhs)
    if rhs[-1] != 0.0:
        raise ValueError("bordered right-hand side must end with 0")
    rnorm = float(np.linalg.norm(rhs))
    tol = max(BORDERED_TOL, BORDERED_TOL * rnorm)
    out = solve_general(op, rhs, cfg.with_tol(tol))
    if out.status == STAGNATION and out.residual_norm > 1e-6 * rnorm:
        raise SingularBorder(
            f"bordered solve stagnated at residual {out.residual_norm:.3e} "
            f"(rhs norm {rnorm:.3e})"
        )
    return out
