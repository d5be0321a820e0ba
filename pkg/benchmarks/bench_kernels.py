"""Compare the compiled and pure numpy kernels on realistic inputs.

Usage::

    python3 benchmarks/bench_kernels.py [--n 32] [--repeat 5] [--json out.json]

For each kernel the script checks that both backends agree, then reports
the best-of-``repeat`` wall time and the speedup.
"""
import argparse
import json
import timeit

import numpy as np

from twofluid import evolve as E
from twofluid import fields as F
from twofluid import kernels
from twofluid import spectral as S
from twofluid.closure import (CapillaryLaw, PhaseLaw, Viscosities, derive_coefficients,
                              solve_equilibrium)


def closure_case(n, rng):
    phase, cap = PhaseLaw(2.0, 2.0), CapillaryLaw(0.0, 1.0, 0.2, -0.1)
    Rp = 1.0 + 0.05 * rng.standard_normal(n ** 3)
    Rm = 1.0 + 0.05 * rng.standard_normal(n ** 3)
    eq = solve_equilibrium(phase, cap)
    guess = np.full(n ** 3, eq.rho_plus)
    args = (Rp, Rm, phase.gamma_plus, phase.gamma_minus, cap.coeffs)

    def call(mod):
        return mod.closure_newton(*args, guess.copy(), 200, 1e-12, 1e-13)

    return call, lambda a, b: float(np.max(np.abs(a[0] - b[0]) / b[0]))


def quartic_case(n, rng):
    c = derive_coefficients(*_canonical())
    coeffs = S.quartic_coeffs_array(np.geomspace(1e-3, 1e3, n ** 3 // 4), c)

    def call(mod):
        return mod.quartic_roots(coeffs)

    def diff(a, b):
        # same roots up to ordering
        return float(np.max(np.abs(np.sort_complex(a) - np.sort_complex(b)) / np.maximum(1.0, np.abs(b))))

    return call, diff


def apply_case(n, rng):
    c = derive_coefficients(*_canonical())
    grid = F.BoxGrid(n, 2 * np.pi * 4)
    prop = E.LinearPropagator(grid, c)
    Em, hp, hm = prop.factors(0.5)
    m = prop.shell.size
    X = rng.standard_normal((8, m)) + 1j * rng.standard_normal((8, m))
    args = (Em, hp, hm, prop.shell, prop.kd, X[0].copy(), X[1:4].copy(), X[4].copy(), X[5:8].copy())

    def call(mod):
        return mod.apply_modes(*args)

    def diff(a, b):
        return max(float(np.max(np.abs(x - y))) for x, y in zip(a, b))

    return call, diff


def _canonical():
    phase, cap, visc = PhaseLaw(2.0, 2.0), CapillaryLaw(0.0, 1.0), Viscosities(2.0, 2.0)
    return solve_equilibrium(phase, cap), visc, cap


CASES = {"closure_newton": closure_case, "quartic_roots": quartic_case, "apply_modes": apply_case}


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=32, help="grid size setting the problem sizes")
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--json", help="also write the results here")
    args = p.parse_args(argv)

    py = kernels.get_backend("python")
    try:
        cy = kernels.get_backend("cython")
    except ImportError:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")

    rng = np.random.default_rng(0)
    results = []
    print(f"{'kernel':<16}{'python [ms]':>14}{'cython [ms]':>14}{'speedup':>10}{'max diff':>12}")
    for name, make in CASES.items():
        call, diff = make(args.n, rng)
        d = diff(call(cy), call(py))
        t_py = min(timeit.repeat(lambda: call(py), number=1, repeat=args.repeat))
        t_cy = min(timeit.repeat(lambda: call(cy), number=1, repeat=args.repeat))
        results.append({"kernel": name, "python_s": t_py, "cython_s": t_cy,
                        "speedup": t_py / t_cy, "max_diff": d})
        print(f"{name:<16}{1e3 * t_py:>14.2f}{1e3 * t_cy:>14.2f}{t_py / t_cy:>10.2f}{d:>12.1e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"n": args.n, "results": results}, fh, indent=2)


if __name__ == "__main__":
    main()
