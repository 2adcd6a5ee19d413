"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Sizes follow the default experiment (m = 6, N = 500, T = 20). The first
numba call (JIT compilation) is excluded from the timings.
"""

import argparse
import json
import sys
import timeit

import numpy as np

from slident import _accel


def cases(rng):
    m, N, T = 6, 500, 20
    Np = N - T
    G = 0.02 * rng.standard_normal((T, m, m))
    E = rng.standard_normal((N + 200, m))
    Y = rng.standard_normal((N, m))
    Cj = rng.standard_normal((m, m, m))
    Cj = np.einsum("jab,jcb->jac", Cj, Cj)
    Mj = rng.standard_normal((m, Np, 40))
    Mj = np.einsum("jak,jbk->jab", Mj, Mj)
    Sigma = np.eye(m) + 0.1
    Vinv = np.linalg.inv(_accel.NUMPY_KERNELS["assemble_dual"](Cj, Mj, Sigma))
    X = rng.standard_normal((m * m * T, m * m * T))
    return {
        "var_recursion": (G, E),
        "lagged_regressor": (Y, T),
        "one_step_predict": (G, Y),
        "assemble_dual": (Cj, Mj, Sigma),
        "dual_trace_terms": (Vinv, Mj),
        "block_traces": (X, m * m, T),
    }


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json")
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        print("numba is not installed; nothing to compare", file=sys.stderr)
        return 1
    rng = np.random.default_rng(0)
    results = []
    print(f"{'kernel':<18}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}{'max |diff|':>12}")
    for name, inputs in cases(rng).items():
        f_np, f_nb = _accel.NUMPY_KERNELS[name], _accel.NUMBA_KERNELS[name]
        ref, got = f_np(*inputs), f_nb(*inputs)  # warm-up, compiles the numba version
        diff = float(np.max(np.abs(ref - got)))
        t_np = min(timeit.repeat(lambda: f_np(*inputs), number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: f_nb(*inputs), number=1, repeat=args.repeat)) * 1e3
        results.append({"kernel": name, "numpy_ms": t_np, "numba_ms": t_nb, "max_abs_diff": diff})
        print(f"{name:<18}{t_np:12.3f}{t_nb:12.3f}{t_np / t_nb:10.2f}{diff:12.2e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
