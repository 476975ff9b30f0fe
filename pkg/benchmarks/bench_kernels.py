"""Compare the compiled and numpy kernel backends.

Times the raw sparse-dense products and a full reified two-hop probe on a
grid KB under each available backend, and checks the outputs agree.

    python3 benchmarks/bench_kernels.py [--n 64] [--b 128] [--reps 5]
"""
import argparse
import time

import numpy as np

from kbfollow import kernels
from kbfollow.coo import dsmm, spmm
from kbfollow.follow import follow_reified, reify
from kbfollow.tasks.grid import GridSpec, gen_grid


def _time(fn, reps):
    fn()
    t0 = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - t0) / reps


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--b", type=int, default=128)
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    rkb = reify(gen_grid(GridSpec(args.n)))
    n_e, n_t = rkb.n_entities, rkb.n_triples
    X = np.zeros((args.b, n_e))
    X[np.arange(args.b), rng.integers(n_e, size=args.b)] = 1.0
    R = np.full((args.b, rkb.n_relations), 1.0 / rkb.n_relations)
    dense_t = rng.random((n_t, args.b))
    a = rkb.m_subj
    cases = {
        "dsmm x@A^T (b x N_E -> b x N_T)": lambda: dsmm(X, a, transpose=True),
        "spmm A^T@y (N_T x b -> N_E x b)": lambda: spmm(a, dense_t, transpose=True),
        "two-hop reified follow": lambda: follow_reified(follow_reified(X, R, rkb), R, rkb),
    }

    backends = sorted(kernels.available_backends())
    start = kernels.BACKEND
    times, outputs = {}, {}
    try:
        for be in backends:
            kernels.use_backend(be)
            for name, fn in cases.items():
                times[be, name] = _time(fn, args.reps)
                outputs[be, name] = fn()
    finally:
        kernels.use_backend(start)

    print(f"grid n={args.n} (N_E={n_e}, N_T={n_t}), b={args.b}, reps={args.reps}")
    header = f"{'case':36s}" + "".join(f"{be + ' ms':>12s}" for be in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10s}{'max diff':>12s}"
    print(header)
    for name in cases:
        line = f"{name:36s}" + "".join(f"{1e3 * times[be, name]:12.2f}" for be in backends)
        if len(backends) > 1:
            diff = float(np.abs(outputs["cython", name] - outputs["python", name]).max())
            line += f"{times['python', name] / times['cython', name]:9.1f}x{diff:12.2e}"
        print(line)
    if len(backends) == 1:
        print("compiled extension not built; only the numpy backend was timed")


if __name__ == "__main__":
    main()
