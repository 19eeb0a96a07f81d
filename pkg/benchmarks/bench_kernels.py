"""Time the compiled Galerkin kernel against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Both backends get identical inputs; the script also reports their largest
entrywise difference.
"""

import argparse
import time

import numpy as np

from homog import get_example, kernels, prepare
from homog.fiber import _difference_table, mode_box, symbols_at

CASES = [
    ("layered-1d", {}, 64),
    ("acoustics-complex", {"c": 0.2}, 6),
    ("acoustics-complex", {"c": 0.2}, 10),
    ("layered-elasticity", {}, 8),
]


def best_of(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    opts = parser.parse_args()
    if kernels.BACKEND != "cython":
        print("compiled kernel not available; timing the fallback only")
    print(f"{'example':<22}{'cutoff':>7}{'entries':>9}{'python s':>11}{'cython s':>11}{'speedup':>9}{'max diff':>11}")
    for name, kw, cutoff in CASES:
        case = get_example(name, **kw)
        g = prepare(case, cutoff).g
        modes = np.ascontiguousarray(mode_box(case.lattice.dim, cutoff))
        sym = symbols_at(case.symbol, case.lattice, modes, 0.1 * np.ones(case.lattice.dim))
        table, strides, offset, nonzero = _difference_table(g, cutoff, modes)
        args = (modes, sym, table, strides, offset, nonzero, bool(g.hermitian))
        t_py, a = best_of(kernels.python_galerkin_matrix, args, opts.repeat)
        t_c, b = best_of(kernels.galerkin_matrix, args, opts.repeat)
        size = a.shape[0] * a.shape[1]
        print(f"{name:<22}{cutoff:>7}{size:>9}{t_py:>11.4f}{t_c:>11.4f}{t_py / t_c:>9.1f}{np.abs(a - b).max():>11.1e}")


if __name__ == "__main__":
    main()
