"""Compare the compiled and numpy window-sampling kernels.

    python benchmarks/bench_kernels.py --windows 2000000 --repeat 3

Both kernels draw from the same counter-based stream, so their outputs are
checked for bit equality before timing.
"""
import argparse
import time

import numpy as np

from pairstats.model import PairDistribution, SetupModel
from pairstats.montecarlo import KERNELS, simulate_outcomes

CASES = {
    "low-power": (SetupModel.from_values(0.1212, 0.0145, 0.0162, 2.5e-7, 2.87e-4, 3.84e-4),
                  PairDistribution("poisson", 0.02375)),
    "bright": (SetupModel.from_values(0.6, 0.25, 0.25, 1e-4, 1e-3, 1e-3, c=0.8),
               PairDistribution("poisson", 1.0)),
    "thermal": (SetupModel.from_values(0.5, 0.2, 0.2, 1e-4, 1e-3, 1e-3),
                PairDistribution("thermal", 0.8)),
}


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--windows", type=int, default=2_000_000)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args(argv)

    backends = sorted(KERNELS)
    if "cython" not in backends:
        print("compiled kernel not built; timing the numpy kernel only")
    print(f"{'case':<10} " + " ".join(f"{b + ' [s]':>12}" for b in backends) + f" {'speedup':>9}")
    for name, (setup, dist) in CASES.items():
        outs = {b: simulate_outcomes(setup, dist, 100_000, args.seed, backend=b) for b in backends}
        if len(outs) == 2 and not np.array_equal(outs["cython"], outs["python"]):
            raise SystemExit(f"{name}: kernels disagree")
        t = {b: best_time(lambda b=b: simulate_outcomes(setup, dist, args.windows, args.seed, backend=b),
                          args.repeat)
             for b in backends}
        speedup = f"{t['python'] / t['cython']:9.1f}" if "cython" in t else f"{'-':>9}"
        print(f"{name:<10} " + " ".join(f"{t[b]:12.3f}" for b in backends) + " " + speedup)


if __name__ == "__main__":
    main()
