"""Compare the numba and numpy loop kernels.

Usage:
    python benchmarks/bench_kernels.py [--datapoints B] [--length L] [--nodes N ...] [--repeat R]

Both backends run the same batch; the script prints seconds per call, ns
per chip and the largest absolute difference between their states.
"""

import argparse
import time

import numpy as np

from dlr import kernels
from dlr.reservoir import make_filter, make_mask


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench(datapoints, length, nodes, taps, repeat, stacked):
    u = np.random.default_rng(0).random((datapoints, length))
    m1 = make_mask(nodes, 0).chips
    m2 = make_mask(nodes, 0, layer=2).chips
    h = make_filter(taps, 1.0).taps
    args = (1.5, 1.6, kernels.SIN_SQUARED, False)

    def run(backend):
        if stacked:
            return kernels.stacked_states(u, m1, m2, h, *args, backend=backend)
        return kernels.loop_states(u, m1, h, *args, backend=backend)

    run("numba")  # compile outside the timed region
    chips = datapoints * length * nodes * (2 if stacked else 1)
    t_nb, s_nb = best_of(lambda: run("numba"), repeat)
    t_np, s_np = best_of(lambda: run("numpy"), repeat)
    diff = float(np.max(np.abs(s_nb - s_np)))
    kind = "stacked" if stacked else "single"
    print(f"{kind:>7} B={datapoints:<5d} L={length:<4d} N={nodes:<5d} "
          f"numba {t_nb:8.3f} s ({1e9 * t_nb / chips:6.1f} ns/chip)  "
          f"numpy {t_np:8.3f} s ({1e9 * t_np / chips:6.1f} ns/chip)  "
          f"speedup {t_np / t_nb:6.1f}x  max|diff| {diff:.1e}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--datapoints", type=int, default=200)
    parser.add_argument("--length", type=int, default=256)
    parser.add_argument("--nodes", type=int, nargs="+", default=[50, 200, 600])
    parser.add_argument("--taps", type=int, default=5)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--stacked", action="store_true", help="also time two stacked loops")
    args = parser.parse_args()
    for n in args.nodes:
        bench(args.datapoints, args.length, n, args.taps, args.repeat, False)
        if args.stacked:
            bench(args.datapoints, args.length, n, args.taps, args.repeat, True)


if __name__ == "__main__":
    main()
