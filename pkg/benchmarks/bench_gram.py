"""Compare the compiled and numpy Gram-assembly backends.

Run with ``python benchmarks/bench_gram.py``. Prints the median time of
each backend per problem size plus the largest absolute difference between
their outputs.
"""

from __future__ import annotations

import argparse
import statistics
import timeit

import numpy as np

from spatfgp import _backend
from spatfgp.kernels import KernelKind


def bench(n: int, dims: int, kind: KernelKind, repeat: int):
    rng = np.random.Generator(np.random.Philox(n * 31 + dims))
    x = rng.random((n, dims))
    inv = 1.0 / (0.2 + rng.random(dims))
    rows = {}
    outs = {}
    for name in _backend.available():
        _backend.use(name)
        outs[name] = _backend.gram(x, x, inv, kind.code, 1.3)
        times = timeit.repeat(lambda: _backend.gram(x, x, inv, kind.code, 1.3), number=1, repeat=repeat)
        rows[name] = statistics.median(times)
    diff = 0.0
    if len(outs) == 2:
        diff = float(np.max(np.abs(outs["compiled"] - outs["python"])))
    return rows, diff


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    original = _backend.name()
    print(f"backends available: {', '.join(_backend.available())}")
    print(f"{'n':>6} {'dims':>5} {'kind':>9} {'compiled [ms]':>14} {'python [ms]':>12} {'speedup':>8} {'max |diff|':>11}")
    try:
        for n, dims in ((200, 2), (1000, 2), (2500, 2), (1000, 40)):
            for kind in (KernelKind.MATERN52, KernelKind.SQUARED_EXPONENTIAL):
                t, diff = bench(n, dims, kind, args.repeat)
                c = t.get("compiled", float("nan")) * 1e3
                p = t["python"] * 1e3
                print(f"{n:>6} {dims:>5} {kind.value:>9} {c:>14.2f} {p:>12.2f} {p / c:>8.2f} {diff:>11.2e}")
    finally:
        _backend.use(original)


if __name__ == "__main__":
    main()
