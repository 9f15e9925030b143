"""Timing of the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--N 10000] [--reps 5]

Shapes are those of the toy identification problem (model-free basis for
the per-sample norms). Also times one full identification cell per backend.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from mnlqr import kernels
from mnlqr.experiments import cell_rng, example_config, generate, parse_config
from mnlqr.identify import second_moment_ambiguity


def best(fn, reps):
    return min(timeit.repeat(fn, number=1, repeat=reps))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--N", type=int, default=10000)
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--cell", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.cell:
        print(cell(args.N, args.reps))
        return
    rng = np.random.default_rng(0)
    Z = rng.standard_normal((args.N, 3))
    T = rng.standard_normal((21, 6, 21))
    S = rng.standard_normal((args.N, 6))
    G = rng.standard_normal((21, 21))
    G = G @ G.T
    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    print(f"compiled backend available: {kernels.BACKEND == 'cython'}")
    print(f"{'kernel':<22}{'backend':<10}{'seconds':>12}")
    for name, call in (("svec_outer_rows", lambda b: kernels.svec_outer_rows(Z, b)),
                       ("sample_op_norms", lambda b: kernels.sample_op_norms(G, T, S, b))):
        for b in backends:
            print(f"{name:<22}{b:<10}{best(lambda: call(b), args.reps):>12.4f}")

    # the backend is fixed at import, so each one gets a fresh interpreter
    for b in backends:
        env = dict(os.environ)
        env.pop("MNLQR_PURE_PYTHON", None)
        if b == "python":
            env["MNLQR_PURE_PYTHON"] = "1"
        out = subprocess.run([sys.executable, __file__, "--cell", "--N", str(args.N),
                              "--reps", str(args.reps)], env=env, capture_output=True,
                             text=True, check=True).stdout
        print(f"{'identify (model-free)':<22}{b:<10}{float(out):>12.4f}")


def cell(N, reps):
    exp = parse_config(example_config("toy-model-free"))
    data = generate(exp, N, cell_rng(0, 0, 0))
    return best(lambda: second_moment_ambiguity(exp.model, data, exp.delta), reps)


if __name__ == "__main__":
    main()
