"""Compare the compiled stepping kernel against the NumPy fallback.

Runs the trapezoidal integrator on identical inputs through both
implementations, checks the results agree to round-off, and reports
wall-clock timings over a few problem sizes.

Usage:  python3 benchmarks/bench_kernel.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from degwave import _kernel_py
from degwave.discretization import build_operator

try:
    from degwave import _kernel
except ImportError:
    _kernel = None


def run(impl, op, u0, w0, loads, dt, nsteps):
    return impl.integrate(op.stiff_diag, op.stiff_off, op.mass,
                          u0.copy(), w0.copy(), loads, dt, nsteps)


def bench(impl, op, u0, w0, loads, dt, nsteps, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = run(impl, op, u0, w0, loads, dt, nsteps)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    if _kernel is None:
        print("compiled kernel not available; showing fallback timings only")

    rng = np.random.default_rng(7)
    print(f"{'n_cells':>8} {'steps':>7} {'python':>10} {'cython':>10} "
          f"{'speedup':>8}  max|diff|")
    for n_cells, nsteps in ((50, 400), (100, 800), (200, 1600), (400, 3200)):
        op = build_operator(0.5, n_cells=n_cells)
        dt = op.grid.h / 2.0
        u0 = rng.standard_normal(op.n_dof)
        w0 = rng.standard_normal(op.n_dof)
        loads = rng.standard_normal((nsteps, op.n_dof))

        t_py, (u_py, w_py) = bench(_kernel_py, op, u0, w0, loads, dt, nsteps,
                                   args.repeat)
        if _kernel is None:
            print(f"{n_cells:>8} {nsteps:>7} {t_py * 1e3:>9.2f}ms "
                  f"{'-':>10} {'-':>8}")
            continue
        t_cy, (u_cy, w_cy) = bench(_kernel, op, u0, w0, loads, dt, nsteps,
                                   args.repeat)
        diff = max(np.max(np.abs(u_py - u_cy)), np.max(np.abs(w_py - w_cy)))
        scale = max(np.max(np.abs(u_py)), 1.0)
        print(f"{n_cells:>8} {nsteps:>7} {t_py * 1e3:>9.2f}ms "
              f"{t_cy * 1e3:>9.2f}ms {t_py / t_cy:>7.2f}x  {diff / scale:.2e}")


if __name__ == "__main__":
    main()
