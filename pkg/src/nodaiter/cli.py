"""Command-line front end.

    nodaiter solve   --generate '{"kind":"laplacian2d","m":31}' --method ini --adaptive
    nodaiter compare --generate '{"kind":"laplacian2d","m":31}' --methods ini:0.8,ini:0.5,ni,ini:adaptive

``solve`` prints one JSON summary object; ``compare`` prints an aligned table
followed by the same rows as a single JSON line. Exit codes: 0 converged,
1 usage or I/O error, 2 not converged.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from nodaiter._kernels import warmup
from nodaiter.errors import NodaError
from nodaiter.noda import (
    RelaxationStrategy,
    SolverConfig,
    m_matrix_split,
    run_ini,
    run_mini,
    run_mni,
    run_ni,
)
from nodaiter.problems import ProblemSpec, build
from nodaiter.sparse import augment, read_matrix_market

__all__ = [
    "TRACE_COLUMNS",
    "RunSummary",
    "MethodChoice",
    "trace_rows",
    "trace_emit",
    "read_trace",
    "run_method",
    "cmd_solve",
    "cmd_compare",
    "main",
]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_CONVERGED = 2

TRACE_COLUMNS = (
    "k",
    "lambda_bar",
    "gamma_k",
    "xi_k",
    "inner_iterations",
    "outer_residual",
    "min_x",
    "positive",
    "used_bordered",
    "eps_bar",
)
_INT_COLS = {"k", "inner_iterations"}
_BOOL_COLS = {"positive", "used_bordered"}


class UsageError(Exception):
    pass


# -- trace I/O ----------------------------------------------------------------


def _fmt_float(v):
    return format(float(v), ".17g")


def trace_rows(trace):
    """Records of ``trace`` as dicts restricted to :data:`TRACE_COLUMNS`."""
    return [{c: getattr(r, c) for c in TRACE_COLUMNS} for r in trace.records]


def _csv_cell(col, v):
    if v is None:
        return ""
    if col in _BOOL_COLS:
        return "true" if v else "false"
    if col in _INT_COLS:
        return str(int(v))
    return _fmt_float(v)


def _json_value(col, v):
    if v is None:
        return "null"
    if col in _BOOL_COLS:
        return "true" if v else "false"
    if col in _INT_COLS:
        return str(int(v))
    if not math.isfinite(v):
        return "null"
    return _fmt_float(v)


def trace_emit(trace, fmt, path):
    """Write ``trace`` as CSV or JSON. Floats carry 17 significant digits."""
    rows = trace_rows(trace)
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for row in rows:
                w.writerow([_csv_cell(c, row[c]) for c in TRACE_COLUMNS])
    elif fmt == "json":
        # hand-rolled so every float goes out with exactly 17 significant digits
        objs = [
            "{" + ", ".join(f'"{c}": {_json_value(c, row[c])}' for c in TRACE_COLUMNS) + "}"
            for row in rows
        ]
        with open(path, "w") as fh:
            fh.write("[\n  " + ",\n  ".join(objs) + "\n]\n" if objs else "[]\n")
    else:
        raise ValueError(f"unknown trace format {fmt!r}")


def _coerce(col, v):
    if v is None or v == "":
        return None
    if col in _BOOL_COLS:
        return v if isinstance(v, bool) else v == "true"
    if col in _INT_COLS:
        return int(v)
    return float(v)


def read_trace(path, fmt=None):
    """Load a trace written by :func:`trace_emit` back into row dicts."""
    fmt = fmt or ("json" if str(path).endswith(".json") else "csv")
    if fmt == "json":
        with open(path) as fh:
            raw = json.load(fh)
    else:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
                raise ValueError(f"unexpected trace columns {reader.fieldnames}")
            raw = list(reader)
    return [{c: _coerce(c, row[c]) for c in TRACE_COLUMNS} for row in raw]


# -- running methods -------------------------------------------------------------


@dataclass
class RunSummary:
    method: str
    sigma_min: Optional[float]
    outer_iterations: int
    inner_iterations: int
    average_inner: int
    wall_time: float
    positivity: bool
    outcome: str
    reason: str = ""
    trace_path: Optional[str] = None
    known_sigma_min: Optional[float] = None
    relative_error: Optional[float] = None
    switch_k: Optional[int] = None
    left_singular_vector: Optional[list] = field(default=None, repr=False)
    right_singular_vector: Optional[list] = field(default=None, repr=False)

    @property
    def converged(self):
        return self.outcome == "converged"

    def to_dict(self):
        d = asdict(self)
        if d["left_singular_vector"] is None:
            del d["left_singular_vector"], d["right_singular_vector"]
        return d


def average_inner(inner, outer):
    """``inner / outer`` rounded half up; 0 when no outer step was taken."""
    if outer == 0:
        return 0
    return int(math.floor(inner / outer + 0.5))


@dataclass(frozen=True)
class MethodChoice:
    """``ni``, ``mni``, ``ini[:gamma|:adaptive]`` or ``mini[:gamma|:adaptive]``."""

    name: str
    strategy: RelaxationStrategy

    @classmethod
    def parse(cls, text):
        name, _, arg = text.strip().lower().partition(":")
        if name not in ("ni", "mni", "ini", "mini"):
            raise UsageError(f"unknown method {text!r}")
        if name in ("ni", "mni"):
            if arg:
                raise UsageError(f"method {name} takes no relaxation argument")
            return cls(name, RelaxationStrategy.exact())
        if arg in ("", "adaptive"):
            return cls(name, RelaxationStrategy.adaptive())
        try:
            return cls(name, RelaxationStrategy.fixed(float(arg)))
        except ValueError as exc:
            raise UsageError(f"bad relaxation factor in {text!r}: {exc}") from None

    @property
    def label(self):
        if self.name in ("ni", "mni"):
            return self.name.upper()
        s = self.strategy
        arg = f"{s.gamma:g}" if s.variant == "fixed" else s.variant
        return f"{self.name.upper()}({arg})"


def run_method(choice, a, *, tol=1e-10, max_outer=500, known_sigma=None, svd=False):
    """Run one method on monotone ``a``; returns ``(summary, x, trace)``.

    NI and MNI act on ``B = s I - A`` (``s`` = largest diagonal entry), so
    ``a`` must be a Z-matrix for them.
    """
    warmup()
    cfg = SolverConfig(
        strategy=choice.strategy, outer_tol=tol, max_outer=max_outer, mode=choice.name
    )
    if choice.name in ("ni", "mni"):
        shift, b = m_matrix_split(a)
        true_rho = None if known_sigma is None else shift - known_sigma
        runner = run_ni if choice.name == "ni" else run_mni
        t0 = time.perf_counter()
        rho, x, trace = runner(b, cfg, true_rho=true_rho)
        elapsed = time.perf_counter() - t0
        sigma = shift - rho
    else:
        runner = run_ini if choice.name == "ini" else run_mini
        t0 = time.perf_counter()
        sigma, x, trace = runner(a, cfg, true_sigma_min=known_sigma)
        elapsed = time.perf_counter() - t0

    outer, inner = trace.outer_iterations, trace.inner_iterations
    summary = RunSummary(
        method=choice.label,
        sigma_min=float(sigma),
        outer_iterations=outer,
        inner_iterations=inner,
        average_inner=average_inner(inner, outer),
        wall_time=elapsed,
        positivity=bool(np.min(x) > 0),
        outcome=trace.outcome,
        reason=trace.reason,
        known_sigma_min=known_sigma,
        relative_error=None if known_sigma is None else abs(sigma - known_sigma) / known_sigma,
        switch_k=trace.switch_k,
    )
    if svd:
        half = a.nrows // 2
        u, v = x[:half], x[half:]
        summary.left_singular_vector = (u / np.linalg.norm(u)).tolist()
        summary.right_singular_vector = (v / np.linalg.norm(v)).tolist()
    return summary, x, trace


# -- problem loading ---------------------------------------------------------------


def _load_problem(args):
    """Returns ``(matrix, known_sigma_min, is_augmented, description)``."""
    if bool(args.matrix) == bool(args.generate):
        raise UsageError("give exactly one of --matrix or --generate")
    if args.matrix:
        if not os.path.exists(args.matrix):
            raise UsageError(f"matrix file not found: {args.matrix}")
        try:
            a = read_matrix_market(args.matrix)
        except OSError as exc:
            raise UsageError(f"cannot read {args.matrix}: {exc}") from None
        known, augmented, desc = None, False, args.matrix
    else:
        text = args.generate
        if os.path.exists(text):
            with open(text) as fh:
                text = fh.read()
        try:
            spec = ProblemSpec.from_json(text)
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise UsageError(f"bad problem spec: {exc}") from None
        a, known = build(spec)
        augmented, desc = spec.kind == "augmented_svd", spec.description
    if args.svd and not augmented:
        a = augment(a)
        augmented = True
    if a.nrows != a.ncols:
        raise UsageError(f"matrix must be square, got {a.nrows}x{a.ncols}")
    return a, known, augmented, desc


def _check_method_fits(choice, a):
    if choice.name in ("ni", "mni"):
        off = a.row_indices() != a.col_indices
        if np.any(a.values[off] > 0):
            raise UsageError(
                f"{choice.name} needs an M-matrix (nonpositive off-diagonal entries); "
                "use ini or mini for general monotone or augmented matrices"
            )


# -- commands ------------------------------------------------------------------


def _add_problem_args(p):
    src = p.add_argument_group("problem")
    src.add_argument("--matrix", metavar="PATH", help="Matrix Market file")
    src.add_argument(
        "--generate", metavar="SPEC", help="problem spec as inline JSON or a path to a JSON file"
    )
    src.add_argument(
        "--svd", action="store_true", help="work on [[0, M], [M^T, 0]] and report singular vectors"
    )
    p.add_argument("--tol", type=float, default=1e-10, help="outer stopping tolerance")
    p.add_argument("--max-outer", type=int, default=500)


def cmd_solve(args):
    if args.gamma is not None and args.adaptive:
        raise UsageError("--gamma and --adaptive are mutually exclusive")
    spec = args.method if args.gamma is None else f"{args.method}:{args.gamma}"
    choice = MethodChoice.parse(spec)
    a, known, augmented, _ = _load_problem(args)
    _check_method_fits(choice, a)
    summary, _, trace = run_method(
        choice, a, tol=args.tol, max_outer=args.max_outer, known_sigma=known, svd=augmented
    )
    if args.trace:
        try:
            trace_emit(trace, args.format, args.trace)
        except OSError as exc:
            raise UsageError(f"cannot write trace {args.trace}: {exc}") from None
        summary.trace_path = args.trace
    print(json.dumps(summary.to_dict()))
    return EXIT_OK if summary.converged else EXIT_NOT_CONVERGED


_TABLE_COLS = ("Method", "I_outer", "I_inner", "I_ave", "CPU time", "Positivity")


def format_table(rows):
    """Aligned text table; ``rows`` are dicts keyed by :data:`_TABLE_COLS`."""
    cells = [list(_TABLE_COLS)] + [[str(r[c]) for c in _TABLE_COLS] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(_TABLE_COLS))]
    lines = ["  ".join(s.ljust(w) for s, w in zip(row, widths)).rstrip() for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def cmd_compare(args):
    choices = [MethodChoice.parse(m) for m in args.methods.split(",") if m.strip()]
    if not choices:
        raise UsageError("--methods is empty")
    a, known, augmented, desc = _load_problem(args)
    rows, records = [], []
    for choice in choices:
        try:
            _check_method_fits(choice, a)
            summary, _, _ = run_method(
                choice, a, tol=args.tol, max_outer=args.max_outer, known_sigma=known, svd=False
            )
        except (UsageError, NodaError, ValueError) as exc:
            rows.append(dict(zip(_TABLE_COLS, (choice.label, "-", "-", "-", "-", f"error: {exc}"))))
            records.append({"method": choice.label, "error": str(exc)})
            continue
        rows.append(
            {
                "Method": summary.method,
                "I_outer": summary.outer_iterations,
                "I_inner": summary.inner_iterations,
                "I_ave": summary.average_inner,
                "CPU time": f"{summary.wall_time:.3f}",
                "Positivity": ("Yes" if summary.positivity else "No")
                + ("" if summary.converged else f" ({summary.outcome})"),
            }
        )
        records.append(summary.to_dict())
    print(f"problem: {desc}" + (" (augmented)" if augmented else ""))
    print(format_table(rows))
    print(json.dumps({"problem": desc, "runs": records}))
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # usage errors exit 1; 2 is reserved for non-convergence
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="nodaiter", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ps = sub.add_parser("solve", help="run one method and print a JSON summary")
    _add_problem_args(ps)
    ps.add_argument("--method", choices=("ni", "ini", "mini", "mni"), default="ini")
    relax = ps.add_mutually_exclusive_group()
    relax.add_argument("--gamma", type=float, help="fixed relaxation factor in (0, 1)")
    relax.add_argument("--adaptive", action="store_true", help="adaptive relaxation (default)")
    ps.add_argument("--trace", metavar="PATH", help="write the per-step trace here")
    ps.add_argument("--format", choices=("csv", "json"), default="csv")
    ps.set_defaults(func=cmd_solve)

    pc = sub.add_parser("compare", help="run several methods on one problem")
    _add_problem_args(pc)
    pc.add_argument(
        "--methods",
        required=True,
        help="comma-separated, e.g. ini:0.8,ini:0.5,ni,ini:adaptive,mini,mni",
    )
    pc.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"nodaiter: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NodaError, ValueError, OSError) as exc:
        print(f"nodaiter: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
