"""Timing for the grid right-hand side: jitted kernel vs sliced numpy twin.

Run:  python3 benchmarks/bench_grid.py [--sizes 96 128 192 256] [--reps 30]

Both kernels fill the same padded interior, so the report also prints
their max abs deviation; a speedup must never hide a divergence.  With
QBM_NO_NUMBA=1 (or numba missing) only the numpy path is timed.
"""

import argparse
import time

import numpy as np

from qbm import _kernels


def make_state(n, rng):
    x = np.linspace(-6.0, 6.0, n)
    rho = np.exp(-np.add.outer(x * x, x * x) / 2.0).astype(np.complex128)
    rho += 0.05 * (rng.standard_normal((n, n))
                   + 1j * rng.standard_normal((n, n)))
    rho_p = _kernels.padded_zeros(n)
    rho_p[2:-2, 2:-2] = rho
    return x, rho_p


def time_kernel(fn, rho_p, out_p, x, dx, reps):
    args = (rho_p, out_p, x, dx, 0.5, 1.0, 0.03, 0.2, 0.01)
    fn(*args)                      # warmup; first numba call compiles
    t0 = time.perf_counter()
    for _ in range(reps):
        fn(*args)
    return (time.perf_counter() - t0) / reps


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+",
                    default=[96, 128, 192, 256])
    ap.add_argument("--reps", type=int, default=30)
    args = ap.parse_args()

    rng = np.random.default_rng(11)
    have = _kernels.HAVE_NUMBA and _kernels.USE_NUMBA
    print(f"numba path: {'on' if have else 'off'}")
    print(f"{'n':>5} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8} "
          f"{'max dev':>10}")
    for n in args.sizes:
        x, rho_p = make_state(n, rng)
        dx = float(x[1] - x[0])
        out_np = _kernels.padded_zeros(n)
        t_np = time_kernel(_kernels.grid_rhs_numpy, rho_p, out_np, x, dx,
                           args.reps)
        if have:
            out_nb = _kernels.padded_zeros(n)
            t_nb = time_kernel(_kernels.grid_rhs_numba, rho_p, out_nb, x, dx,
                               args.reps)
            dev = float(np.max(np.abs(out_nb - out_np)))
            print(f"{n:>5} {1e3 * t_np:>10.3f} {1e3 * t_nb:>10.3f} "
                  f"{t_np / t_nb:>8.2f} {dev:>10.2e}")
        else:
            print(f"{n:>5} {1e3 * t_np:>10.3f} {'-':>10} {'-':>8} {'-':>10}")


if __name__ == "__main__":
    main()
