"""Compiled vs pure-Python kernels.

    python3 benchmarks/bench_kernels.py [--repeat N]

Checks both backends give identical results before timing them.
"""

import argparse
import random
import timeit

from posesim.kernels import _fallback

try:
    from posesim.kernels import _native
except ImportError:
    _native = None

CASES = {
    "crash_trials(100, 70, 7, 2e5)": lambda k: k.crash_trials(100, 70, 7, 200_000, 1),
    "crash_trials(1000, 100, 11, 2e5)": lambda k: k.crash_trials(1000, 100, 11, 200_000, 1),
    "quicksort_steps(2048 ints)": lambda k: k.quicksort_steps(DATA, 5),
}
DATA = [random.Random(3).randrange(1 << 31) for _ in range(2048)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _native is None:
        print("compiled kernels not built; only the fallback is available")
    print(f"{'kernel':36} {'python':>10} {'cython':>10} {'speedup':>8}")
    for name, fn in CASES.items():
        py = min(timeit.repeat(lambda: fn(_fallback), number=1, repeat=args.repeat))
        if _native is None:
            print(f"{name:36} {py:10.4f} {'-':>10} {'-':>8}")
            continue
        assert fn(_native) == fn(_fallback), name
        cy = min(timeit.repeat(lambda: fn(_native), number=1, repeat=args.repeat))
        print(f"{name:36} {py:10.4f} {cy:10.4f} {py / cy:7.0f}x")


if __name__ == "__main__":
    main()
