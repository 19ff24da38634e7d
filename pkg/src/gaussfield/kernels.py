"""Kernel backend selection.

The compiled extension is preferred; set ``GAUSSFIELD_PURE_PYTHON=1`` to
force the NumPy fallback (the benchmark compares both).
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("GAUSSFIELD_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _kernels_py


def cheb_eval(coef: np.ndarray, length: float, x: np.ndarray, impl=None) -> np.ndarray:
    impl = impl or _impl
    x = np.ascontiguousarray(x, dtype=float).ravel()
    out = np.empty_like(x)
    impl.cheb_eval(np.ascontiguousarray(coef, dtype=float), float(length), x, out)
    return out


def trig_sum(kappa: np.ndarray, u: np.ndarray, g: np.ndarray, odd: bool, impl=None) -> np.ndarray:
    impl = impl or _impl
    kappa = np.ascontiguousarray(kappa, dtype=float).ravel()
    out = np.empty_like(kappa)
    impl.trig_sum(kappa, np.ascontiguousarray(u, dtype=float),
                  np.ascontiguousarray(g, dtype=float), bool(odd), out)
    return out


def weighted_vdot(w: np.ndarray, a: np.ndarray, b: np.ndarray, impl=None) -> complex:
    impl = impl or _impl
    return complex(impl.weighted_vdot(np.ascontiguousarray(w, dtype=float),
                                      np.ascontiguousarray(a, dtype=complex),
                                      np.ascontiguousarray(b, dtype=complex)))
