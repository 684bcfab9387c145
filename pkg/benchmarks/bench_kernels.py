"""Compare the numpy and numba kernel backends on protocol-sized inputs.

Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --iters 200 --repeats 7
"""
import argparse
import time

import numpy as np

from crqpuf import _kernels


def make_chain_case(B, t, n, seed):
    rng = np.random.default_rng(seed)
    ang = rng.uniform(0.0, 2.0 * np.pi, (B, t, n))
    is_y = (np.arange(t) % 2 == 0).astype(np.uint8)
    shrink = rng.uniform(0.96, 1.0, n)
    tilt = rng.normal(0.0, 0.05, n)
    return (np.cos(ang), np.sin(ang), is_y, shrink, np.cos(tilt), np.sin(tilt))


def make_count_case(shots, n, seed):
    rng = np.random.default_rng(seed)
    return rng.random((shots, n)), rng.uniform(0.05, 0.95, n)


def best_of(fn, iters, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(iters):
            fn()
        best = min(best, (time.perf_counter() - t0) / iters)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iters", type=int, default=100, help="calls per timing loop")
    ap.add_argument("--repeats", type=int, default=5, help="loops per case, best wins")
    args = ap.parse_args(argv)

    cases = [
        ("chain_z   enroll      B=15   t=1 n=27", _kernels.chain_z,
         make_chain_case(15, 1, 27, 0)),
        ("chain_z   2d training B=900  t=2 n=27", _kernels.chain_z,
         make_chain_case(900, 2, 27, 1)),
        ("chain_z   alternating B=15   t=8 n=27", _kernels.chain_z,
         make_chain_case(15, 8, 27, 2)),
        ("chain_z   bulk        B=4000 t=4 n=27", _kernels.chain_z,
         make_chain_case(4000, 4, 27, 3)),
        ("count_below shots=2000  n=27", _kernels.count_below,
         make_count_case(2000, 27, 4)),
        ("count_below shots=40000 n=27", _kernels.count_below,
         make_count_case(40000, 27, 5)),
    ]

    backends = ["numpy"]
    if _kernels.HAS_NUMBA:
        backends.append("numba")
    else:
        print("numba not installed, timing the numpy backend only")

    # first calls trigger JIT compilation, keep them out of the timings
    for backend in backends:
        _kernels.set_backend(backend)
        for _, fn, case_args in cases:
            fn(*case_args)

    width = max(len(name) for name, _, _ in cases)
    header = f"{'case':<{width}}  " + "".join(f"{b + ' us':>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, fn, case_args in cases:
        per_call = []
        for backend in backends:
            _kernels.set_backend(backend)
            per_call.append(best_of(lambda: fn(*case_args), args.iters, args.repeats))
        row = f"{name:<{width}}  " + "".join(f"{t * 1e6:>12.1f}" for t in per_call)
        if len(per_call) == 2:
            row += f"{per_call[0] / per_call[1]:>9.2f}x"
        print(row)


if __name__ == "__main__":
    main()
