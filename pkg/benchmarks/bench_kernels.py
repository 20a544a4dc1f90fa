"""Compare the numba kernels with the numpy/scipy fallback.

    python benchmarks/bench_kernels.py [--size 4096] [--repeat 20]

The solver picks a backend from QNLS_NUMBA (0 forces numpy); here both are
called explicitly through the ``backend`` argument.
"""

import argparse
import time

import numpy as np

from qnls import kernels
from qnls.model import NonlinearitySpec, ProblemSpec
from qnls.solver import Discretization, StepperConfig


def _best(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def _systems(n, rng):
    lo = rng.normal(size=n) + 1j * rng.normal(size=n)
    up = rng.normal(size=n) + 1j * rng.normal(size=n)
    di = 4.0 + np.abs(lo) + np.abs(up) + 1j * rng.normal(size=n)
    rhs = rng.normal(size=n) + 1j * rng.normal(size=n)
    blo = rng.normal(size=(n, 2, 2))
    bup = rng.normal(size=(n, 2, 2))
    bdi = rng.normal(size=(n, 2, 2)) + 8.0 * np.eye(2)
    brhs = rng.normal(size=(n, 2))
    return (lo, di, up, rhs), (blo, bdi, bup, brhs)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=4096)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    tri, blk = _systems(args.size, rng)
    spec = ProblemSpec(dim=3, radius=16.0, grid_points=args.size, dt0=1e-3, t_end=1e-3,
                       h=NonlinearitySpec.power(0.5))
    cfg = StepperConfig()

    backends = ["numpy"] + (["numba"] if kernels.HAVE_NUMBA else [])
    rows = []
    for b in backends:
        disc = Discretization(spec, backend=b)
        u0 = np.exp(-disc.grid.r ** 2).astype(complex)
        rows.append((b,
                     _best(lambda: kernels.solve_tridiagonal(*tri, backend=b), args.repeat),
                     _best(lambda: kernels.solve_block_tridiagonal(*blk, backend=b), args.repeat),
                     _best(lambda: disc.step_values(u0, spec.dt0, cfg, None), max(3, args.repeat // 4))))
    print(f"M = {args.size}, best of {args.repeat} (seconds)")
    print(f"{'backend':8s} {'tridiag':>10s} {'block 2x2':>10s} {'CN step':>10s}")
    for b, t1, t2, t3 in rows:
        print(f"{b:8s} {t1:10.2e} {t2:10.2e} {t3:10.2e}")
    if len(rows) == 2:
        print("speed-up " + " ".join(f"{rows[0][k] / rows[1][k]:10.1f}" for k in (1, 2, 3)))


if __name__ == "__main__":
    main()
