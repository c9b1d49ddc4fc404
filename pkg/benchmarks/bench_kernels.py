"""Time the compiled and numpy Adam/SGD kernels on a parameter vector.

    python3 benchmarks/bench_kernels.py --size 270000 --repeat 200
"""
import argparse
import json
import timeit

import numpy as np

from blockrandom import _kernels_py

try:
    from blockrandom import _kernels
except ImportError:
    _kernels = None


def bench(mod, size: int, repeat: int) -> dict:
    g = np.random.default_rng(0)
    p, grad = g.standard_normal(size), g.standard_normal(size)
    m, v = np.zeros(size), np.zeros(size)
    adam = timeit.timeit(lambda: mod.adam_update(p, grad, m, v, 1e-3, 0.9, 0.999, 0.1, 0.001, 1e-8),
                         number=repeat)
    sgd = timeit.timeit(lambda: mod.sgd_update(p, grad, 1e-3), number=repeat)
    return {"adam_ms": 1e3 * adam / repeat, "sgd_ms": 1e3 * sgd / repeat}


def same_result(size: int) -> bool:
    g = np.random.default_rng(1)
    a = [g.standard_normal(size), g.standard_normal(size), np.zeros(size), np.zeros(size)]
    b = [x.copy() for x in a]
    _kernels.adam_update(*a, 1e-3, 0.9, 0.999, 0.1, 0.001, 1e-8)
    _kernels_py.adam_update(*b, 1e-3, 0.9, 0.999, 0.1, 0.001, 1e-8)
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=270_000, help="parameters (2x512 blobs network is ~270k)")
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    out = {"size": args.size, "python": bench(_kernels_py, args.size, args.repeat)}
    if _kernels is not None:
        out["cython"] = bench(_kernels, args.size, args.repeat)
        out["adam_speedup"] = out["python"]["adam_ms"] / out["cython"]["adam_ms"]
        out["bitwise_equal"] = same_result(args.size)
    else:
        out["cython"] = None
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
