"""Compare the compiled kernels with the NumPy reference implementation.

Usage: python benchmarks/bench_kernels.py [--repeats N] [--json out.json]

Each kernel runs on a fixed workload sized like the experiments (spike
windows of 50 steps, the 100-point Poisson grid). Reported numbers are the
best wall-clock time over the repeats.
"""

import argparse
import json
import sys
import timeit

import numpy as np

from spikeonet import kernels


def workloads(rng):
    spikes = (rng.random((50, 400)) < 0.2).astype(np.float64)
    lif = (0, 0)  # reset to rest, no refractory period
    n = 100
    lower = np.ones(n)
    upper = np.ones(n)
    diag = np.full(n, -2.0)
    rhs = rng.normal(size=n)
    pre = (rng.random((50, 100)) < 0.2).astype(np.uint8)
    post = (rng.random((50, 100)) < 0.2).astype(np.uint8)
    long_pre = (rng.random((2000, 10)) < 0.01).astype(np.uint8)
    long_post = (rng.random((2000, 10)) < 0.01).astype(np.uint8)
    return {
        "lif_euler": lambda k: k.lif_euler(0.625 * spikes, 0.95, 0.0, 0.0, 1.0, *lif, 0, 0.0),
        "lif_integral": lambda k: k.lif_integral(spikes, 1.0, 20.0, 1.6, 0.0, 1.0, *lif, 0, 0.0),
        "stdp_pairs": lambda k: k.stdp_pairs(pre, post, 0.02, 0.015, 4.0, 1.0),
        "stdp_long": lambda k: k.stdp_pairs(long_pre, long_post, 0.02, 0.015, 4.0, 1.0),
        "tridiag_solve": lambda k: k.tridiag_solve(lower, diag, upper, rhs),
    }


def check_parity(fn, impls):
    ref = fn(impls["python"])
    for name, impl in impls.items():
        got = fn(impl)
        for a, b in zip(np.atleast_1d(ref) if not isinstance(ref, tuple) else ref,
                        np.atleast_1d(got) if not isinstance(got, tuple) else got):
            if not np.allclose(a, b, rtol=1e-10, atol=1e-12):
                raise SystemExit(f"backend {name} disagrees with the reference")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--json", help="also write the results to this file")
    args = ap.parse_args(argv)

    impls = {name: kernels.load_backend(name) for name in kernels.available_backends()}
    if "cython" not in impls:
        print("compiled extension not built; only the reference backend is timed", file=sys.stderr)

    results = {}
    for kernel, fn in workloads(np.random.default_rng(0)).items():
        if kernel != "tridiag_solve":
            check_parity(fn, impls)
        row = {}
        for name, impl in impls.items():
            number = 20 if name == "cython" else 2
            best = min(timeit.repeat(lambda: fn(impl), number=number, repeat=args.repeats)) / number
            row[name] = best * 1e3
        results[kernel] = row

    print(f"{'kernel':<15}" + "".join(f"{n + ' ms':>14}" for n in impls) + f"{'speedup':>10}")
    for kernel, row in results.items():
        speed = row["python"] / row["cython"] if "cython" in row else float("nan")
        print(f"{kernel:<15}" + "".join(f"{row[n]:>14.4f}" for n in impls) + f"{speed:>10.1f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
