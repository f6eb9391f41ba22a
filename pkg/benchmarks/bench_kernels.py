"""Compiled vs numpy second-order kernel on serial chains and random trees.

    python benchmarks/bench_kernels.py [--sizes 8,16,32,64] [--reps 5]
"""
import argparse
import time

import numpy as np

from rbdderiv import KERNEL, id_so, random_model, random_state


def best(fn, reps):
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="8,16,32,64")
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--branch", type=float, default=0.0)
    args = ap.parse_args()
    if KERNEL != "cython":
        print("compiled kernel not built; timing the numpy kernel only")
    print(f"{'N':>4} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8} {'max |diff|':>11}")
    for n in (int(s) for s in args.sizes.split(",")):
        tree = random_model(n, 0, args.branch, kinds=("revolute",))
        state = random_state(tree, 0)
        t_np = best(lambda: id_so(tree, state, kernel="numpy"), args.reps)
        if KERNEL == "cython":
            t_cy = best(lambda: id_so(tree, state, kernel="cython"), args.reps)
            a, b = id_so(tree, state, kernel="numpy"), id_so(tree, state, kernel="cython")
            diff = max(float(np.max(np.abs(x - y))) for x, y in
                       zip((a.d2tau_dq2, a.d2tau_dqd2, a.d2tau_cross, a.dM_dq),
                           (b.d2tau_dq2, b.d2tau_dqd2, b.d2tau_cross, b.dM_dq)))
            print(f"{n:>4} {1e3 * t_np:>10.2f} {1e3 * t_cy:>10.2f} {t_np / t_cy:>8.1f} {diff:>11.2e}")
        else:
            print(f"{n:>4} {1e3 * t_np:>10.2f} {'-':>10} {'-':>8} {'-':>11}")


if __name__ == "__main__":
    main()
