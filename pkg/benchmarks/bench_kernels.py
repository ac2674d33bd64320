"""Compare the compiled kernels with the numpy fallback.

Run with ``python benchmarks/bench_kernels.py [--sizes 101 401 1001]``.
Prints microseconds per call for each kernel and the speedup.
"""
import argparse
import timeit

import numpy as np

from wupgraph import kernels
from wupgraph.builders import build_interval

KERNELS = ("energy", "energy_gradient", "variance_rowsums", "objective_parts")


def _args(name, space, u):
    dpow = space.distance_power(2.0)
    ei, ej = space.edge_ends
    c = space.conductances
    w = np.ascontiguousarray(u * u * space.measure)
    return {
        "energy": (u, ei, ej, c),
        "energy_gradient": (u, ei, ej, c),
        "variance_rowsums": (dpow, w),
        "objective_parts": (dpow, u, space.measure, ei, ej, c),
    }[name]


def time_call(fn, args, repeat=5):
    number, _ = timeit.Timer(lambda: fn(*args)).autorange()
    best = min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat))
    return 1e6 * best / number


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--sizes", type=int, nargs="+", default=[101, 401, 1001])
    args = p.parse_args(argv)
    compiled = kernels.compiled_backend()
    if compiled is None:
        print("compiled backend unavailable; build it with `python setup.py build_ext --inplace`")
    print(f"{'n':>6} {'kernel':<18} {'python us':>11} {'cython us':>11} {'speedup':>8}")
    for n in args.sizes:
        space = build_interval(n, 1.0, dirichlet_ends=True)
        u = np.random.default_rng(0).standard_normal(n)
        for name in KERNELS:
            a = _args(name, space, u)
            tp = time_call(getattr(kernels.python_backend, name), a)
            if compiled is None:
                print(f"{n:>6} {name:<18} {tp:>11.1f} {'-':>11} {'-':>8}")
                continue
            tc = time_call(getattr(compiled, name), a)
            print(f"{n:>6} {name:<18} {tp:>11.1f} {tc:>11.1f} {tp / tc:>7.2f}x")


if __name__ == "__main__":
    main()
