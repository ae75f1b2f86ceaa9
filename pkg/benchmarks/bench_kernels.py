"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both backends are loaded in one process; the first numba call (compile or
cache load) is excluded from timing.  Outputs are checked for equality.
"""

import argparse
import time

import numpy as np

from iirc import _kernels


def _best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    truth = rng.random((20000, 100)) < 0.03
    pred = rng.random((20000, 100)) < 0.03
    feats = rng.normal(size=(500, 32))
    u = rng.random(99999)

    def xo(impl):
        out = np.empty(200000, dtype=np.uint64)
        impl.xoshiro_fill(np.array([1, 2, 3, 4], dtype=np.uint64), out)
        return out

    def fy(impl):
        arr = np.arange(100000, dtype=np.int64)
        impl.fisher_yates(arr, u)
        return arr

    return {
        "xoshiro_fill 200k": xo,
        "fisher_yates 100k": fy,
        "set_counts 20000x100": lambda impl: impl.set_counts(truth, pred),
        "confusion_counts 20000x100": lambda impl: impl.confusion_counts(truth, pred),
        "herding 500x32 m=20": lambda impl: impl.herding(feats, 20),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels.numba_impl is None:
        raise SystemExit("numba is not importable; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}  equal")
    for name, fn in cases(rng).items():
        ref = fn(_kernels.numpy_impl)
        got = fn(_kernels.numba_impl)  # warm-up
        t_np = _best_of(lambda: fn(_kernels.numpy_impl), args.repeat)
        t_nb = _best_of(lambda: fn(_kernels.numba_impl), args.repeat)
        print(f"{name:<28}{t_np * 1e3:>12.2f}{t_nb * 1e3:>12.2f}{t_np / t_nb:>10.1f}  {_same(ref, got)}")


if __name__ == "__main__":
    main()
