"""Compare the compiled kernels with the NumPy fallback.

    python3 benchmarks/benchmark.py [--repeat N]

Prints one line per kernel with the best time of each backend and the
speed-up, then the same for an end-to-end shell pairing, which is where the
kernels are used in practice.
"""
import argparse
import timeit

import numpy as np

from gaussfield import _kernels_py, kernels

try:
    from gaussfield import _ckernels
except ImportError:
    _ckernels = None


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_cases(rng):
    coef = rng.normal(size=(64, 17))
    x = rng.uniform(0, 64 * 0.25, 200_000)
    kappa, u, g = rng.normal(size=20_000) * 30, rng.uniform(0, 1, 64), rng.normal(size=64)
    w = rng.uniform(size=500_000)
    a = rng.normal(size=500_000) + 1j * rng.normal(size=500_000)
    b = rng.normal(size=500_000) + 1j * rng.normal(size=500_000)
    return {
        "cheb_eval   (200k points)": lambda impl: kernels.cheb_eval(coef, 0.25, x, impl=impl),
        "trig_sum    (20k x 64)": lambda impl: kernels.trig_sum(kappa, u, g, True, impl=impl),
        "weighted_vdot (500k)": lambda impl: kernels.weighted_vdot(w, a, b, impl=impl),
    }


def pairing_case():
    from gaussfield import lightcone
    from gaussfield.propagators import QuadratureSpec
    from gaussfield.testfn import TestFn

    spec = QuadratureSpec(p_max=30.0, n_radial=48, n_polar=32, n_azimuth=16)
    a = TestFn.scalar_atom((0, 0, 0, 0), (0.6, 0.8, 0.8, 0.8))
    b = TestFn.scalar_atom((0.5, 0.2, 0, 0), (0.6, 0.8, 0.8, 0.8))

    def run(impl):
        saved = kernels._impl
        kernels._impl = impl
        try:
            lightcone.clear_cache()
            return lightcone.pair_D_position(a, b, spec)
        finally:
            kernels._impl = saved

    return run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    impls = [("python", _kernels_py)] + ([("cython", _ckernels)] if _ckernels else [])
    print(f"selected backend: {kernels.BACKEND}")
    if _ckernels is None:
        print("compiled extension not built; only the fallback is timed")
    cases = kernel_cases(np.random.default_rng(0))
    cases["pair_D_position (end to end)"] = pairing_case()
    for name, fn in cases.items():
        ref = None
        times = {}
        for label, impl in impls:
            val = fn(impl)
            if ref is None:
                ref = val
            else:
                assert np.allclose(val, ref, rtol=1e-10, atol=1e-12), f"{name}: backends disagree"
            times[label] = best(lambda: fn(impl), args.repeat)
        line = "  ".join(f"{k} {v * 1e3:9.2f} ms" for k, v in times.items())
        if len(times) == 2:
            line += f"  speed-up {times['python'] / times['cython']:6.1f}x"
        print(f"{name:32s} {line}")


if __name__ == "__main__":
    main()
