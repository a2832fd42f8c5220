"""Time the log-likelihood kernels: numba against the numpy fallback.

    python benchmarks/bench_kernels.py [--n 5000] [--repeat 200] [--fits]

Both backends are importable in one process regardless of
``ZALS_DISABLE_NUMBA``; the flag only picks which one the library uses.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from zals import _kernels as K
from zals._accel import HAS_NUMBA
from zals.generators import GeneratorKind, log_normalizer, quantile_G


def problem(kind, n, seed=0):
    rng = np.random.default_rng(seed)
    X = np.column_stack((np.ones(n), rng.random((n, 4))))
    W = np.column_stack((np.ones(n), rng.random((n, 2))))
    V = np.column_stack((np.ones(n), rng.random((n, 6))))
    l2_args = (kind.code, kind.xi_value, log_normalizer(kind), float(quantile_G(kind, 0.5)),
               rng.normal(0.0, 1.5, n), X, W, rng.normal(0, 0.3, 5), rng.normal(0, 0.3, 3))
    l1_args = (rng.random(n) < 0.6, V, rng.normal(0, 0.3, 7))
    return l2_args, l1_args


def best_of(fn, args, repeat):
    fn(*args)  # compile / warm up
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


FIT_SNIPPET = """
import time, numpy as np
from zals.simulation import SimDesign, generate_dataset
from zals.regression import fit
spec = generate_dataset(SimDesign(), 0.5, {n}, np.random.default_rng(1))
fit(spec)
t0 = time.perf_counter()
for _ in range({reps}):
    fit(spec)
print((time.perf_counter() - t0) / {reps})
"""


def time_fit(n, reps, disable):
    # the backend is fixed at import, so each one gets its own interpreter
    env = dict(os.environ, ZALS_DISABLE_NUMBA="1" if disable else "")
    out = subprocess.run([sys.executable, "-c", FIT_SNIPPET.format(n=n, reps=reps)], env=env,
                         capture_output=True, text=True, check=True)
    return float(out.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--fits", action="store_true", help="also time complete fits under each backend")
    args = ap.parse_args()
    if not HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    kinds = [GeneratorKind.lognormal(), GeneratorKind.student_t(4.0),
             GeneratorKind.power_exponential(0.5), GeneratorKind.ebs(0.5)]
    print(f"n = {args.n}, best of {args.repeat}; times in microseconds")
    print(f"{'kernel':<22}{'numpy':>10}{'numba':>10}{'speedup':>9}")
    for kind in kinds:
        l2_args, l1_args = problem(kind, args.n)
        for label, a, b, fargs in (
            (f"l2 {kind}", K.l2_numpy, K.l2_numba, l2_args),
            (f"l2+grad {kind}", K.l2_grad_numpy, K.l2_grad_numba, l2_args),
        ):
            tn, tb = best_of(a, fargs, args.repeat), best_of(b, fargs, args.repeat)
            print(f"{label:<22}{tn * 1e6:>10.1f}{tb * 1e6:>10.1f}{tn / tb:>8.1f}x")
    l2_args, l1_args = problem(kinds[0], args.n)
    for label, a, b in (("l1", K.l1_numpy, K.l1_numba), ("l1+grad", K.l1_grad_numpy, K.l1_grad_numba)):
        tn, tb = best_of(a, l1_args, args.repeat), best_of(b, l1_args, args.repeat)
        print(f"{label:<22}{tn * 1e6:>10.1f}{tb * 1e6:>10.1f}{tn / tb:>8.1f}x")
    if args.fits:
        print("\ncomplete fit, default design, times in milliseconds")
        print(f"{'n':<22}{'numpy':>10}{'numba':>10}{'speedup':>9}")
        for n in (100, 400, 2000, 10000):
            reps = max(3, 4000 // n)
            tn, tb = time_fit(n, reps, True), time_fit(n, reps, False)
            print(f"{n:<22}{tn * 1e3:>10.1f}{tb * 1e3:>10.1f}{tn / tb:>8.1f}x")


if __name__ == "__main__":
    main()
