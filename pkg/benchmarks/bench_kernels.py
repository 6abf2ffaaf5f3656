"""Numba vs pure-numpy kernels, plus one end-to-end INI solve.

    python3 benchmarks/bench_kernels.py [--grid 200] [--repeat 20]

The backend is fixed at import time, so each backend runs in a child
interpreter with ``NODAITER_DISABLE_NUMBA`` set or cleared.
"""
import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import json, sys, time, timeit
import numpy as np
from nodaiter import _kernels
from nodaiter.problems import laplacian_2d, uniform_stream
from nodaiter.noda import run_ini

grid, repeat = int(sys.argv[1]), int(sys.argv[2])
a = laplacian_2d(grid)
x = uniform_stream(7, a.ncols) + 0.5
_kernels.warmup()
args = (a.row_offsets, a.col_indices, a.values, x)
mv = min(timeit.repeat(lambda: _kernels.csr_matvec(*args), number=10, repeat=repeat)) / 10
rx = min(timeit.repeat(lambda: _kernels.ratio_extrema_kernel(x, x[::-1].copy()), number=10, repeat=repeat)) / 10
small = laplacian_2d(31)
t0 = time.perf_counter()
run_ini(small)
solve = time.perf_counter() - t0
print(json.dumps({"backend": _kernels.BACKEND, "n": a.nrows, "nnz": a.nnz,
                  "matvec_s": mv, "ratio_s": rx, "ini_31x31_s": solve}))
"""


def run_backend(disable_numba, grid, repeat):
    env = dict(os.environ)
    if disable_numba:
        env["NODAITER_DISABLE_NUMBA"] = "1"
    else:
        env.pop("NODAITER_DISABLE_NUMBA", None)
    out = subprocess.run(
        [sys.executable, "-c", CHILD, str(grid), str(repeat)],
        env=env, check=True, capture_output=True, text=True,
    )
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--grid", type=int, default=200, help="Laplacian grid side (n = grid**2)")
    p.add_argument("--repeat", type=int, default=20)
    args = p.parse_args()

    rows = [run_backend(False, args.grid, args.repeat), run_backend(True, args.grid, args.repeat)]
    print(f"n = {rows[0]['n']}, nnz = {rows[0]['nnz']}")
    print(f"{'backend':8s} {'matvec [ms]':>12s} {'ratio [ms]':>12s} {'INI 31x31 [s]':>14s}")
    for r in rows:
        print(f"{r['backend']:8s} {1e3 * r['matvec_s']:12.3f} {1e3 * r['ratio_s']:12.3f} {r['ini_31x31_s']:14.3f}")
    if rows[0]["backend"] == "numba":
        print(f"matvec speed-up: {rows[1]['matvec_s'] / rows[0]['matvec_s']:.1f}x")


if __name__ == "__main__":
    main()
