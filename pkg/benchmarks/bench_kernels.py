"""Time the compiled curvature kernel against the numpy fallback.

    python3 benchmarks/bench_kernels.py --points 2000 --dims 2 3 5 --repeat 5
"""

import argparse
import time

import numpy as np

from qeverify import kernels


def random_jet(rng, count, n):
    a = rng.normal(size=(count, n, n))
    ginv = a @ a.transpose(0, 2, 1) + n * np.eye(n)
    dg = rng.normal(size=(count, n, n, n))
    dg = dg + dg.transpose(0, 2, 1, 3)
    ddg = rng.normal(size=(count, n, n, n, n))
    ddg = ddg + ddg.transpose(0, 2, 1, 3, 4)
    ddg = ddg + ddg.transpose(0, 1, 2, 4, 3)
    return ginv, dg, ddg


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=2000)
    ap.add_argument("--dims", type=int, nargs="+", default=[2, 3, 5])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    impls = kernels.available()
    print(f"implementations: {', '.join(impls)}; default {kernels.IMPLEMENTATION}")
    print(f"{'n':>3} {'points':>8} " + " ".join(f"{i + ' ms':>12}" for i in impls) + f" {'speedup':>8} {'max diff':>10}")
    rng = np.random.default_rng(args.seed)
    for n in args.dims:
        jet = random_jet(rng, args.points, n)
        ms = {i: 1e3 * best_of(lambda i=i: kernels.curvature(*jet, implementation=i), args.repeat) for i in impls}
        if "compiled" in impls:
            a = kernels.curvature(*jet, implementation="python")
            b = kernels.curvature(*jet, implementation="compiled")
            diff = max(float(np.max(np.abs(x - y))) for x, y in zip(a, b))
            speed = f"{ms['python'] / ms['compiled']:8.2f}"
        else:
            diff, speed = float("nan"), f"{'-':>8}"
        print(f"{n:>3} {args.points:>8} " + " ".join(f"{ms[i]:12.2f}" for i in impls) + f" {speed} {diff:10.1e}")


if __name__ == "__main__":
    main()
