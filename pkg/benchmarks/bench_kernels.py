"""Compare the numba and numpy paths of the hot kernels.

    python benchmarks/bench_kernels.py [--n 64] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from liqdecay import _kernels as kr


def cases(n, rng):
    shape = (n, n, n // 2 + 1)
    xi = rng.uniform(0, 20, shape)
    t = np.full(shape, 0.01)
    e = kr.fluid_propagator_np(xi, t, 2.0, 2.0)
    x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    y = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    phys = (n, n, n)
    nvec = 0.1 * rng.standard_normal((3,) + phys)
    u = rng.standard_normal((3,) + phys)
    g = rng.standard_normal((3, 3) + phys)
    dbar = np.array([0.0, 0.0, 1.0])
    return {
        "fluid_propagator": lambda impl: impl(xi, t, 2.0, 2.0),
        "apply_block": lambda impl: impl(*e, x, y),
        "renormalize": lambda impl: impl(nvec, dbar),
        "director_source": lambda impl: impl(u, g, nvec, dbar),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"grid {args.n}^3, best of {args.repeat}, numba available: {kr._HAVE_NUMBA}")
    print(f"{'kernel':<18}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, call in cases(args.n, rng).items():
        f_np = getattr(kr, f"{name}_np")
        f_nb = getattr(kr, f"{name}_nb")
        call(f_nb)  # compile outside the timing
        t_np = min(timeit.repeat(lambda: call(f_np), number=1, repeat=args.repeat))
        t_nb = min(timeit.repeat(lambda: call(f_nb), number=1, repeat=args.repeat))
        print(f"{name:<18}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>10.2f}")


if __name__ == "__main__":
    main()
