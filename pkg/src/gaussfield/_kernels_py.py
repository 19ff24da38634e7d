"""Pure NumPy versions of the hot loops.

Used when the compiled ``_ckernels`` extension is unavailable or when
``GAUSSFIELD_PURE_PYTHON=1`` is set.
"""
import numpy as np


def cheb_eval(coef, length, x, out):
    """Evaluate a piecewise Chebyshev table at points ``x >= 0``.

    ``coef[i]`` holds the coefficients on ``[i*length, (i+1)*length]``.
    Points past the last row evaluate to zero.
    """
    nint, deg1 = coef.shape
    idx = np.floor(x / length).astype(np.intp)
    inside = idx < nint
    idx_in = idx[inside]
    t = 2.0 * (x[inside] - idx_in * length) / length - 1.0
    c = coef[idx_in]
    b1 = np.zeros_like(t)
    b2 = np.zeros_like(t)
    t2 = 2.0 * t
    for k in range(deg1 - 1, 0, -1):
        b1, b2 = c[:, k] + t2 * b1 - b2, b1
    out[:] = 0.0
    out[inside] = c[:, 0] + t * b1 - b2
    return out


def trig_sum(kappa, u, g, odd, out):
    """out[i] = sum_t g[t] * (sin if odd else cos)(kappa[i] * u[t])."""
    step = max(1, 4_000_000 // max(len(u), 1))
    fn = np.sin if odd else np.cos
    for s in range(0, len(kappa), step):
        out[s:s + step] = fn(np.outer(kappa[s:s + step], u)) @ g
    return out


def weighted_vdot(w, a, b):
    """sum_i w[i] * conj(a[i]) * b[i] for complex vectors."""
    return np.sum(w * (a.conj() * b))
