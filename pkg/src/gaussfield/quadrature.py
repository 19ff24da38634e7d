"""One-dimensional quadrature and transform tables.

Everything here works with the bump ``b(u) = exp(-1/(1-u^2))`` on
``(-1, 1)``.  Under ``u = tanh(t)`` the bump becomes ``exp(-cosh(t)^2)``,
which decays double-exponentially, so the plain trapezoid rule in ``t``
converges spectrally; it is the workhorse for all 1-D integrals.
"""
from __future__ import annotations

import threading
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.fft import dct

from . import kernels

T_MAX = 3.7  # exp(-cosh(3.7)^2) ~ 1e-177


class QuadratureError(RuntimeError):
    """A quadrature failed to reach its tolerance at maximum refinement."""


@lru_cache(maxsize=64)
def tanh_nodes(n: int, t_max: float = T_MAX):
    """Trapezoid nodes in ``t`` mapped to ``u = tanh(t)``.

    Returns ``(u, dudt_weights, cosh2)`` where ``dudt_weights`` already
    contains the step and the Jacobian ``sech(t)^2``.
    """
    t = np.linspace(-t_max, t_max, n)
    h = t[1] - t[0]
    c2 = np.cosh(t) ** 2
    u = np.tanh(t)
    w = h / c2
    for arr in (u, w, c2):
        arr.setflags(write=False)
    return u, w, c2


def bump(u):
    """The standard bump ``exp(-1/(1-u^2))`` on ``|u|<1``, zero elsewhere."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    m = np.abs(u) < 1.0
    um = u[m]
    out[m] = np.exp(-1.0 / (1.0 - um * um))
    return out


@lru_cache(maxsize=None)
def bump_integral() -> float:
    """``Z = int_{-1}^{1} b(u) du`` to machine precision."""
    u, w, c2 = tanh_nodes(513)
    return float(np.sum(w * np.exp(-c2)))


def smooth_step(u):
    """``S(u) = Z^-1 int_{-1}^{u} b``: 0 for u <= -1, 1 for u >= 1."""
    u = np.asarray(u, dtype=float)
    out = np.where(u >= 1.0, 1.0, 0.0)
    m = np.abs(u) < 1.0
    if np.any(m):
        x, wx = leggauss(48)
        tu = np.arctanh(u[m])
        lo = -T_MAX
        # integrate exp(-cosh^2 t) sech^2 t over [lo, tu]
        half = 0.5 * (tu - lo)
        ts = lo + half[:, None] * (x[None, :] + 1.0)
        c2 = np.cosh(ts) ** 2
        vals = np.exp(-c2) / c2
        out[m] = half * (vals @ wx) / bump_integral()
    return out


def gauss_legendre(n: int, a: float, b: float):
    x, w = leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def cheb_nodes(deg: int) -> np.ndarray:
    """Chebyshev points of the first kind on [-1, 1], ``deg+1`` of them."""
    k = np.arange(deg + 1)
    return np.cos(np.pi * (k + 0.5) / (deg + 1))


def cheb_coefficients(values: np.ndarray) -> np.ndarray:
    """Coefficients from values at :func:`cheb_nodes` (last axis)."""
    n = values.shape[-1]
    c = dct(values, type=2, axis=-1) / n
    c[..., 0] *= 0.5
    return c


class PiecewiseChebyshev:
    """Lazily built piecewise Chebyshev interpolant of a real function on
    ``[0, inf)``.

    ``sampler(x)`` must evaluate the function at an array of points.  Rows
    are created on demand for the intervals a query touches; once an
    interval falls below ``floor`` everywhere the table is truncated and
    the function is treated as zero further out.
    """

    def __init__(self, sampler, length: float = 2.0, deg: int = 20,
                 floor: float = 0.0, max_intervals: int = 20000):
        self.sampler = sampler
        self.length = float(length)
        self.deg = deg
        self.floor = floor
        self.max_intervals = max_intervals
        self._coef = np.full((0, deg + 1), np.nan)
        self._cut = None  # first interval index treated as identically zero
        self._lock = threading.Lock()

    def _ensure(self, top: int):
        with self._lock:
            if self._cut is not None:
                top = min(top, self._cut)
            top = min(top, self.max_intervals)
            n_old = self._coef.shape[0]
            if top > n_old:
                grown = np.full((top, self.deg + 1), np.nan)
                grown[:n_old] = self._coef
                self._coef = grown
            missing = np.flatnonzero(np.isnan(self._coef[:top, 0]))
            if missing.size == 0:
                return
            t = cheb_nodes(self.deg)
            x = (missing[:, None] + 0.5 * (t[None, :] + 1.0)) * self.length
            vals = self.sampler(x.ravel()).reshape(x.shape)
            self._coef[missing] = cheb_coefficients(vals)
            if self.floor > 0.0:
                small = np.max(np.abs(vals), axis=1) < self.floor
                for i, s in zip(missing, small):
                    if s and (self._cut is None or i < self._cut):
                        # keep only if every later sampled interval is also small
                        self._cut = int(i)
                if self._cut is not None:
                    self._coef = self._coef[: self._cut]

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        shape = x.shape
        x = np.abs(x.ravel())
        if x.size == 0:
            return np.zeros(shape)
        top = int(np.floor(x.max() / self.length)) + 1
        self._ensure(top)
        coef = self._coef
        if np.isnan(coef).any():  # only when max_intervals truncated the request
            raise QuadratureError("transform table exceeded its maximum size")
        return kernels.cheb_eval(coef, self.length, x).reshape(shape)


class BumpTransform:
    """Fourier transforms of the bump family on ``(-1, 1)``.

    ``B(kappa) = int u^eps (1-u^2)^(-j) b(u) exp(i kappa u) du`` equals
    ``i^eps R(kappa)`` with ``R`` real and of parity ``(-1)^eps``.  One
    instance per ``(eps, j)``; tables are shared through :func:`transform`.
    """

    def __init__(self, eps: int, j: int, rtol: float = 1e-13, max_nodes: int = 1 << 18):
        self.eps = eps
        self.j = j
        self.rtol = rtol
        self.max_nodes = max_nodes
        u, w, c2 = tanh_nodes(1025)
        g = self._weights(u, w, c2)
        self.scale = float(np.sum(np.abs(g)))  # = int |u^eps q^-j b|
        self.table = PiecewiseChebyshev(self.direct, length=2.0, deg=20,
                                        floor=1e-19 * self.scale)

    def _weights(self, u, w, c2):
        return w * u ** self.eps * c2 ** self.j * np.exp(-c2)

    def direct(self, kappa) -> np.ndarray:
        """R(kappa) by adaptive trapezoid refinement (doubling)."""
        kappa = np.ascontiguousarray(np.abs(np.asarray(kappa, dtype=float)).ravel())
        if kappa.size == 0:
            return kappa.copy()
        n = 1 << int(np.ceil(np.log2(2.5 * kappa.max() + 160.0)))
        prev = None
        while n <= self.max_nodes:
            u, w, c2 = tanh_nodes(n + 1)
            cur = kernels.trig_sum(kappa, u, self._weights(u, w, c2), self.eps == 1)
            if prev is not None and np.max(np.abs(cur - prev)) <= self.rtol * self.scale:
                return cur
            prev = cur
            n *= 2
        raise QuadratureError(
            f"bump transform (eps={self.eps}, j={self.j}) did not converge "
            f"for kappa up to {kappa.max():.3g}")

    def real_part(self, kappa) -> np.ndarray:
        """R(kappa) for signed kappa, via the table."""
        kappa = np.asarray(kappa, dtype=float)
        r = self.table(kappa)
        if self.eps == 1:
            r = np.where(kappa < 0, -r, r)
        return r

    def __call__(self, kappa) -> np.ndarray:
        r = self.real_part(kappa)
        return 1j * r if self.eps == 1 else r.astype(complex)


_TRANSFORMS: dict = {}
_TLOCK = threading.Lock()


def transform(eps: int, j: int) -> BumpTransform:
    key = (int(eps), int(j))
    with _TLOCK:
        tr = _TRANSFORMS.get(key)
        if tr is None:
            tr = _TRANSFORMS[key] = BumpTransform(*key)
    return tr


def interval_integral(fn, a: float, b: float, n: int = 129) -> float:
    """Integrate a bump-like function vanishing smoothly at ``a`` and ``b``."""
    if b <= a:
        return 0.0
    u, w, _ = tanh_nodes(n)
    half = 0.5 * (b - a)
    return float(half * np.sum(w * fn(0.5 * (a + b) + half * u)))
