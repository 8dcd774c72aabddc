"""Time the compiled kernels against the numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel with the median time of each backend and the
speedup. Requires the extension to be built (``pip install -e .``).
"""

import argparse
import timeit

import numpy as np

from sfl import _pykernels as py
from sfl import kernels
from sfl.gridworld import builtin_map, transition_table


def cases(rng):
    p, g = rng.normal(size=160 * 512), rng.normal(size=160 * 512)
    m, v = np.zeros_like(p), np.zeros_like(p)
    adam = (p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 0.5, 0.5)
    out = np.zeros((160, 512))
    ids = rng.integers(0, 160, size=128).astype(np.int64)
    rows = rng.normal(size=(128, 512))
    X, q = rng.normal(size=(500, 160)), rng.normal(size=160)
    table = transition_table(builtin_map("multiroom3")).astype(np.int64)
    acts = rng.integers(0, 4, size=10_000).astype(np.int64)
    return {
        "adam_step": lambda k: k.adam_step(*adam),
        "scatter_add_rows": lambda k: k.scatter_add_rows(out, ids, rows, 1.0),
        "cosine_to_rows": lambda k: k.cosine_to_rows(q, X),
        "bfs_distances": lambda k: k.bfs_distances(table, 0),
        "rollout": lambda k: k.rollout(table, 0, acts),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--number", type=int, default=20)
    args = ap.parse_args(argv)
    if kernels.compiled is None:
        raise SystemExit("compiled extension not available; build with pip install -e .")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'python (us)':>14}{'cython (us)':>14}{'speedup':>10}")
    for name, fn in cases(rng).items():
        t = {}
        for label, impl in (("python", py), ("cython", kernels.compiled)):
            runs = timeit.repeat(lambda: fn(impl), repeat=args.repeat, number=args.number)
            t[label] = 1e6 * np.median(runs) / args.number
        print(f"{name:<18}{t['python']:>14.1f}{t['cython']:>14.1f}{t['python'] / t['cython']:>9.1f}x")


if __name__ == "__main__":
    main()
