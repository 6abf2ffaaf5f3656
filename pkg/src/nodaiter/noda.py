"""Noda-type outer iterations for the smallest eigenpair of a monotone matrix.

Two forms are provided:

* B-form (``run_ni``, ``run_mni``) works on an irreducible nonnegative ``B``
  and converges to its Perron root from above.
* A-form (``run_ini``, ``run_mini``) works on an irreducible monotone ``A``
  through shifted solves with ``lam*A - I``; the shift ``lam`` decreases to
  ``rho(A^-1) = 1/sigma_min(A)``.

Every run returns ``(value, x, trace)``. Failures and iteration-cap exits are
reported in ``trace.outcome`` instead of being raised, so partial traces are
never lost.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from nodaiter.errors import (
    DeltaSignError,
    NodaError,
    NonPositiveSolution,
    PositivityLost,
)
from nodaiter.krylov import (
    BORDERED_TOL,
    InnerConfig,
    solve_bordered,
    solve_general,
    solve_symmetric,
)
from nodaiter.sparse import (
    BorderedMonotone,
    SparseMatrix,
    BorderedNonneg,
    Plain,
    ShiftedMonotone,
    ShiftedNonneg,
    matvec,
    ratio_extrema,
)

__all__ = [
    "RelaxationStrategy",
    "SolverConfig",
    "OuterState",
    "StepRecord",
    "ConvergenceTrace",
    "SolveResult",
    "initial_shift",
    "inner_tolerance",
    "positivity_guard",
    "outer_residual",
    "ini_step",
    "ni_step",
    "mni_bordered_step",
    "mini_bordered_step",
    "run_ini",
    "run_ni",
    "run_mni",
    "run_mini",
    "solve",
    "m_matrix_split",
]

TOL_FLOOR = 1e-13
EXACT_TOL = 1e-14
SHIFT_SOLVE_TOL = 1e-12
MAX_GUARD_RETRIES = 4
FIXED_POINT_TOL = 1e-15

CONVERGED = "converged"
MAX_OUTER = "max_outer_reached"
FAILED = "failed"


@dataclass(frozen=True)
class RelaxationStrategy:
    """How the relaxation factor ``gamma_k`` is picked at each outer step.

    ``exact`` solves every inner system to ``1e-14`` with ``gamma_k = 0``;
    ``fixed`` uses a constant ``gamma``; ``adaptive`` uses
    ``(lam_{k-1} - lam_k) / lam_{k-1}`` and ``gamma_0 = 0``.
    """

    variant: str
    gamma: Optional[float] = None

    def __post_init__(self):
        if self.variant not in ("exact", "fixed", "adaptive"):
            raise ValueError(f"unknown strategy {self.variant!r}")
        if self.variant == "fixed" and not (self.gamma is not None and 0 < self.gamma < 1):
            raise ValueError("fixed gamma must lie in (0, 1)")

    @classmethod
    def exact(cls):
        return cls("exact")

    @classmethod
    def fixed(cls, gamma):
        return cls("fixed", float(gamma))

    @classmethod
    def adaptive(cls):
        return cls("adaptive")

    def gamma_k(self, lambdas):
        """Relaxation factor for the next step given the shifts so far."""
        if self.variant == "exact":
            return 0.0
        if self.variant == "fixed":
            return self.gamma
        if len(lambdas) < 2:
            return 0.0
        prev, cur = lambdas[-2], lambdas[-1]
        return (prev - cur) / prev

    @property
    def label(self):
        if self.variant == "fixed":
            return f"fixed({self.gamma:g})"
        return self.variant


@dataclass(frozen=True)
class SolverConfig:
    strategy: RelaxationStrategy = field(default_factory=RelaxationStrategy.adaptive)
    outer_tol: float = 1e-10
    max_outer: int = 500
    inner: InnerConfig = field(default_factory=InnerConfig)
    mode: str = "ini"
    # None: decide from an exact symmetry check of the matrix
    symmetric_hint: Optional[bool] = None

    def __post_init__(self):
        if not self.outer_tol > 0:
            raise ValueError("outer_tol must be positive")
        if self.mode not in ("ini", "mini", "ni", "mni"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class OuterState:
    lambda_bar: float
    x: np.ndarray
    k: int = 0


@dataclass
class StepRecord:
    """State ``k`` of a run plus the step taken from it.

    ``gamma_k``, ``xi_k``, ``xi_target`` and ``inner_iterations`` describe the
    inner solve performed at state ``k``; they are ``None`` on the final
    record, where no step was taken.
    """

    k: int
    lambda_bar: float
    gamma_k: Optional[float]
    xi_k: Optional[float]
    inner_iterations: int
    outer_residual: float
    min_x: float
    positive: bool
    used_bordered: bool
    eps_bar: Optional[float] = None
    retries: int = 0
    xi_target: Optional[float] = None
    inner_converged: bool = True


@dataclass
class ConvergenceTrace:
    records: list = field(default_factory=list)
    outcome: str = CONVERGED
    reason: str = ""
    switch_k: Optional[int] = None

    @property
    def converged(self):
        return self.outcome == CONVERGED

    @property
    def outer_iterations(self):
        return sum(1 for r in self.records if r.xi_k is not None)

    @property
    def inner_iterations(self):
        return sum(r.inner_iterations for r in self.records)

    def lambdas(self):
        return [r.lambda_bar for r in self.records]


class SolveResult(NamedTuple):
    value: float
    x: np.ndarray
    trace: ConvergenceTrace


# -- helpers ------------------------------------------------------------------


def _unit_ones(n):
    return np.full(n, 1.0 / math.sqrt(n))


def _check_start(x0, n):
    x0 = np.array(x0, dtype=np.float64)
    if x0.shape != (n,):
        raise ValueError(f"start vector must have length {n}")
    if not np.all(x0 > 0):
        raise ValueError("start vector must be strictly positive")
    return x0 / np.linalg.norm(x0)


def _symmetric(a, cfg):
    if cfg is not None and cfg.symmetric_hint is not None:
        return cfg.symmetric_hint
    return a.is_symmetric


def _inner_solve(op, rhs, inner_cfg, symmetric):
    if symmetric:
        return solve_symmetric(op, rhs, inner_cfg)
    return solve_general(op, rhs, inner_cfg)


def _eps_bar(lambda_bar, true_rho):
    if true_rho is None:
        return None
    return (lambda_bar - true_rho) / true_rho


# -- building blocks ------------------------------------------------------------


def initial_shift(a, x0, inner):
    """A starting shift above ``rho(A^-1)``.

    Solves ``A w = x0`` to ``1e-12`` and inflates ``max(w / x0)``, which is an
    upper bound for ``rho(A^-1)`` up to the solve error. A solution with a
    nonpositive entry triggers one retry at a 100x tighter tolerance.
    """
    symmetric = a.is_symmetric
    tol = SHIFT_SOLVE_TOL
    for _ in range(2):
        out = _inner_solve(Plain(a), x0, inner.with_tol(tol), symmetric)
        if np.all(out.y > 0):
            _, hi = ratio_extrema(out.y, x0)
            return hi * (1.0 + 1e-8) + 1e-12
        tol /= 100.0
    raise NonPositiveSolution(
        "A w = x0 has a nonpositive solution entry; A is not monotone or the solve is too loose"
    )


def inner_tolerance(state, gamma_k):
    """``max(gamma_k * min(x_k) / lam_k, 1e-13)``."""
    return max(gamma_k * float(np.min(state.x)) / state.lambda_bar, TOL_FLOOR)


def positivity_guard(resolve, outcome, tol, max_retries=MAX_GUARD_RETRIES):
    """Re-solve at 10x tighter tolerance until the solution is positive.

    ``resolve(tol)`` must return a fresh inner outcome. Returns
    ``(outcome, retries)``.
    """
    retries = 0
    while not np.all(outcome.y > 0):
        if retries == max_retries:
            raise PositivityLost(
                f"inner solution still has min entry {outcome.y.min():.3e} "
                f"after {retries} tighter re-solves"
            )
        retries += 1
        tol /= 10.0
        outcome = resolve(tol)
    return outcome, retries


def outer_residual(a, state):
    """``||A x - x / lam|| / sqrt(||A||_1 ||A||_inf)``."""
    r = matvec(a, state.x) - state.x / state.lambda_bar
    return float(np.linalg.norm(r)) / a.norm_scale


def _nonneg_residual(b, state):
    return float(np.linalg.norm(matvec(b, state.x) - state.lambda_bar * state.x))


def _record(state, residual, true_rho, **step):
    # a step is certified positive only when its inner solve met the target
    certified = step.pop("inner_converged", True)
    defaults = dict(gamma_k=None, xi_k=None, inner_iterations=0, used_bordered=False)
    defaults.update(step)
    mx = float(np.min(state.x))
    return StepRecord(
        k=state.k,
        lambda_bar=state.lambda_bar,
        outer_residual=residual,
        min_x=mx,
        positive=bool(mx > 0 and certified),
        inner_converged=certified,
        eps_bar=_eps_bar(state.lambda_bar, true_rho),
        **defaults,
    )


def _check_decrease(old, new):
    if not new < old:
        raise PositivityLost(f"shift failed to decrease ({old!r} -> {new!r})")


# -- A-form steps ---------------------------------------------------------------


def ini_step(a, state, gamma_k, cfg, *, true_rho=None, residual=None):
    """One inexact Noda step on monotone ``A``.

    Solves ``(lam A - I) y = A x`` to the relaxed tolerance, then sets
    ``lam' = lam - (1 - gamma_k) min(x / y)`` and ``x' = y / ||y||``.
    """
    if not 0 <= gamma_k < 1:
        raise ValueError("gamma_k must lie in [0, 1)")
    if cfg.strategy.variant == "exact":
        tol = EXACT_TOL
    else:
        tol = inner_tolerance(state, gamma_k)
    op = ShiftedMonotone(state.lambda_bar, a)
    rhs = matvec(a, state.x)
    symmetric = _symmetric(a, cfg)

    spent = []

    def resolve(t):
        out = _inner_solve(op, rhs, cfg.inner.with_tol(t), symmetric)
        spent.append(out.iterations)
        return out

    out, retries = positivity_guard(resolve, resolve(tol), tol)
    y = out.y
    lo, _ = ratio_extrema(state.x, y)
    new_lambda = state.lambda_bar - (1.0 - gamma_k) * lo
    _check_decrease(state.lambda_bar, new_lambda)
    if residual is None:
        residual = outer_residual(a, state)
    rec = _record(
        state,
        residual,
        true_rho,
        gamma_k=gamma_k,
        xi_k=out.residual_norm,
        inner_iterations=sum(spent),
        retries=retries,
        xi_target=tol / 10.0**retries,
        inner_converged=out.converged,
    )
    return OuterState(new_lambda, y / np.linalg.norm(y), state.k + 1), rec


def mini_bordered_step(a, state, cfg, *, true_rho=None, residual=None):
    """Bordered (rank-one update) step on monotone ``A``.

    Returns ``(new_state, record, fixed_point)``; ``fixed_point`` is True when
    the right-hand side vanished and the state was returned unchanged.
    """
    ax = matvec(a, state.x)
    top = state.lambda_bar * ax - state.x
    if residual is None:
        residual = outer_residual(a, state)
    if np.linalg.norm(top) <= FIXED_POINT_TOL:
        rec = _record(state, residual, true_rho, gamma_k=0.0, xi_k=0.0, used_bordered=True)
        return state, rec, True
    op = BorderedMonotone(state.lambda_bar, a, state.x, ax=ax)
    out = solve_bordered(op, np.append(top, 0.0), cfg.inner)
    dy, delta = out.y[:-1], float(out.y[-1])
    if not delta < 0:
        raise DeltaSignError(f"bordered solve gave delta = {delta!r} (expected < 0)")
    z = state.x + dy
    if not np.all(z > 0):
        raise PositivityLost("bordered update produced a nonpositive entry")
    y = z / (-delta)
    lo, _ = ratio_extrema(state.x, y)
    new_lambda = state.lambda_bar - lo
    _check_decrease(state.lambda_bar, new_lambda)
    rec = _record(
        state,
        residual,
        true_rho,
        gamma_k=0.0,
        xi_k=out.residual_norm,
        inner_iterations=out.iterations,
        used_bordered=True,
        xi_target=max(BORDERED_TOL, BORDERED_TOL * np.linalg.norm(top)),
        inner_converged=out.converged,
    )
    return OuterState(new_lambda, z / np.linalg.norm(z), state.k + 1), rec, False


# -- B-form steps ---------------------------------------------------------------


def ni_step(b, state, cfg, *, true_rho=None, residual=None):
    """Exact Noda step on nonnegative ``B``: ``(lam I - B) y = x`` to 1e-14."""
    op = ShiftedNonneg(state.lambda_bar, b)
    out = _inner_solve(op, state.x, cfg.inner.with_tol(EXACT_TOL), _symmetric(b, cfg))
    if not np.all(out.y > 0):
        raise PositivityLost(f"Noda solve lost positivity (min {out.y.min():.3e})")
    x_new = out.y / np.linalg.norm(out.y)
    _, new_lambda = ratio_extrema(matvec(b, x_new), x_new)
    if residual is None:
        residual = _nonneg_residual(b, state)
    rec = _record(
        state,
        residual,
        true_rho,
        gamma_k=0.0,
        xi_k=out.residual_norm,
        inner_iterations=out.iterations,
        xi_target=EXACT_TOL,
        inner_converged=out.converged,
    )
    return OuterState(new_lambda, x_new, state.k + 1), rec


def mni_bordered_step(b, state, cfg, *, true_rho=None, residual=None):
    """Bordered Noda step on nonnegative ``B``.

    Returns ``(new_state, record, fixed_point)`` like :func:`mini_bordered_step`.
    """
    top = state.lambda_bar * state.x - matvec(b, state.x)
    if residual is None:
        residual = _nonneg_residual(b, state)
    if np.linalg.norm(top) <= FIXED_POINT_TOL:
        rec = _record(state, residual, true_rho, gamma_k=0.0, xi_k=0.0, used_bordered=True)
        return state, rec, True
    op = BorderedNonneg(state.lambda_bar, b, state.x)
    out = solve_bordered(op, np.append(top, 0.0), cfg.inner)
    dy, delta = out.y[:-1], float(out.y[-1])
    if not delta < 0:
        raise DeltaSignError(f"bordered solve gave delta = {delta!r} (expected < 0)")
    z = state.x + dy
    if not np.all(z > 0):
        raise PositivityLost("bordered update produced a nonpositive entry")
    x_new = z / np.linalg.norm(z)
    _, new_lambda = ratio_extrema(matvec(b, x_new), x_new)
    rec = _record(
        state,
        residual,
        true_rho,
        gamma_k=0.0,
        xi_k=out.residual_norm,
        inner_iterations=out.iterations,
        used_bordered=True,
        xi_target=max(BORDERED_TOL, BORDERED_TOL * np.linalg.norm(top)),
        inner_converged=out.converged,
    )
    return OuterState(new_lambda, x_new, state.k + 1), rec, False


# -- drivers ----------------------------------------------------------------------


def _finish(trace, state, residual, true_rho):
    trace.records.append(_record(state, residual, true_rho))


def _drive(state, trace, cfg, residual_fn, step_fn, true_rho):
    """Shared outer loop. ``step_fn(state, residual)`` returns
    ``(new_state, record, fixed_point)``."""
    try:
        while True:
            residual = residual_fn(state)
            if residual <= cfg.outer_tol:
                trace.outcome = CONVERGED
                _finish(trace, state, residual, true_rho)
                return state
            if state.k >= cfg.max_outer:
                trace.outcome = MAX_OUTER
                trace.reason = f"outer residual {residual:.3e} after {state.k} steps"
                _finish(trace, state, residual, true_rho)
                return state
            new_state, rec, fixed_point = step_fn(state, residual)
            if fixed_point:
                trace.outcome = CONVERGED
                trace.records.append(rec)
                return state
            trace.records.append(rec)
            if rec.used_bordered and trace.switch_k is None:
                trace.switch_k = rec.k
            state = new_state
    except NodaError as exc:
        trace.outcome = FAILED
        trace.reason = f"{type(exc).__name__}: {exc}"
        _finish(trace, state, residual_fn(state), true_rho)
        return state


def _a_form_start(a, cfg, x0, true_sigma_min):
    if a.nrows != a.ncols:
        raise ValueError("matrix must be square")
    x0 = _unit_ones(a.nrows) if x0 is None else _check_start(x0, a.nrows)
    lam0 = initial_shift(a, x0, cfg.inner)
    true_rho = None if true_sigma_min is None else 1.0 / true_sigma_min
    return OuterState(lam0, x0, 0), true_rho


def run_ini(a, cfg=None, x0=None, true_sigma_min=None):
    """Inexact Noda iteration on monotone ``A``.

    Returns ``(sigma_min, x, trace)`` where ``sigma_min = 1 / lam_final``.
    """
    cfg = cfg or SolverConfig()
    state, true_rho = _a_form_start(a, cfg, x0, true_sigma_min)
    trace = ConvergenceTrace()

    def step(s, residual):
        gamma = cfg.strategy.gamma_k(trace.lambdas() + [s.lambda_bar])
        new, rec = ini_step(a, s, gamma, cfg, true_rho=true_rho, residual=residual)
        return new, rec, False

    state = _drive(state, trace, cfg, lambda s: outer_residual(a, s), step, true_rho)
    return SolveResult(1.0 / state.lambda_bar, state.x, trace)


def run_mini(a, cfg=None, x0=None, true_sigma_min=None, switch_tol=None):
    """Inexact Noda iteration that switches to bordered steps near convergence.

    Bordered steps are taken whenever the outer residual is at most
    ``switch_tol`` (default ``sqrt(outer_tol)``).
    """
    cfg = cfg or SolverConfig(mode="mini")
    switch_tol = math.sqrt(cfg.outer_tol) if switch_tol is None else switch_tol
    state, true_rho = _a_form_start(a, cfg, x0, true_sigma_min)
    trace = ConvergenceTrace()

    def step(s, residual):
        if residual > switch_tol:
            gamma = cfg.strategy.gamma_k(trace.lambdas() + [s.lambda_bar])
            new, rec = ini_step(a, s, gamma, cfg, true_rho=true_rho, residual=residual)
            return new, rec, False
        return mini_bordered_step(a, s, cfg, true_rho=true_rho, residual=residual)

    state = _drive(state, trace, cfg, lambda s: outer_residual(a, s), step, true_rho)
    return SolveResult(1.0 / state.lambda_bar, state.x, trace)


def _b_form_start(b, x0):
    if b.nrows != b.ncols:
        raise ValueError("matrix must be square")
    if np.any(b.values < 0):
        raise ValueError("B must be entrywise nonnegative")
    x0 = _unit_ones(b.nrows) if x0 is None else _check_start(x0, b.nrows)
    _, lam0 = ratio_extrema(matvec(b, x0), x0)
    return OuterState(lam0, x0, 0)


def m_matrix_split(a):
    """Write a Z-matrix as ``s I - B`` with ``s`` its largest diagonal entry.

    Returns ``(s, B)``; ``B`` is nonnegative and ``sigma_min(A) = s - rho(B)``
    when ``A`` is an M-matrix.
    """
    rows = a.row_indices()
    diag = rows == a.col_indices
    if np.any(a.values[~diag] > 0):
        raise ValueError("matrix has a positive off-diagonal entry (not a Z-matrix)")
    d = np.zeros(a.nrows)
    np.add.at(d, rows[diag], a.values[diag])
    s = float(d.max())
    idx = np.arange(a.nrows)
    b = SparseMatrix.from_coo(
        a.nrows,
        a.ncols,
        np.concatenate([idx, rows]),
        np.concatenate([idx, a.col_indices]),
        np.concatenate([np.full(a.nrows, s), -a.values]),
    )
    return s, b


def run_ni(b, cfg=None, x0=None, true_rho=None):
    """Exact Noda iteration on irreducible nonnegative ``B``.

    Returns ``(rho, x, trace)``. Convergence is declared when
    ``||B x - lam x|| <= cfg.outer_tol``.
    """
    cfg = cfg or SolverConfig(strategy=RelaxationStrategy.exact(), mode="ni")
    state = _b_form_start(b, x0)
    trace = ConvergenceTrace()

    def step(s, residual):
        new, rec = ni_step(b, s, cfg, true_rho=true_rho, residual=residual)
        return new, rec, False

    state = _drive(state, trace, cfg, lambda s: _nonneg_residual(b, s), step, true_rho)
    return SolveResult(state.lambda_bar, state.x, trace)


def run_mni(b, cfg=None, x0=None, true_rho=None, switch_tol=None, force_bordered=False):
    """Modified Noda iteration on nonnegative ``B``.

    Plain Noda steps while ``||B x - lam x|| > switch_tol`` (default
    ``sqrt(outer_tol)``), bordered steps afterwards. ``force_bordered`` uses
    bordered steps from the first iteration.
    """
    cfg = cfg or SolverConfig(strategy=RelaxationStrategy.exact(), mode="mni")
    switch_tol = math.sqrt(cfg.outer_tol) if switch_tol is None else switch_tol
    if force_bordered:
        switch_tol = math.inf
    state = _b_form_start(b, x0)
    trace = ConvergenceTrace()

    def step(s, residual):
        if residual > switch_tol:
            new, rec = ni_step(b, s, cfg, true_rho=true_rho, residual=residual)
            return new, rec, False
        return mni_bordered_step(b, s, cfg, true_rho=true_rho, residual=residual)

    state = _drive(state, trace, cfg, lambda s: _nonneg_residual(b, s), step, true_rho)
    return SolveResult(state.lambda_bar, state.x, trace)


def solve(matrix, cfg, x0=None, true_value=None):
    """Dispatch on ``cfg.mode``. ``true_value`` is sigma_min (A-form) or rho (B-form)."""
    if cfg.mode == "ini":
        return run_ini(matrix, cfg, x0, true_value)
    if cfg.mode == "mini":
        return run_mini(matrix, cfg, x0, true_value)
    if cfg.mode == "ni":
        return run_ni(matrix, cfg, x0, true_value)
    return run_mni(matrix, cfg, x0, true_value)
