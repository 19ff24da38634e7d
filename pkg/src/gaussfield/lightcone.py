"""Position-space light-cone integrals.

Pairings of scalar test functions with translation-invariant kernels are
written through the cross-correlation ``C(z) = int rho1(x) rho2(x - z) dx``,
which for separable atoms is a product of 1-D correlations.  With that,

* ``<rho1, D rho2> = int R dR/(4 pi) dOmega [C(-R, R n) - C(R, R n)]``
  (``D = D_a' - D_r'`` with ``D_r'(t, x) = delta(t - |x|)/(4 pi |x|)``);
* ``<rho1, Dflat rho2> = C_FLAT int R^2 dR dOmega H(R) C_s(R n)`` with
  ``Dflat = C_FLAT sign(z0) theta(z^2)`` and
  ``H(R) = int_R^inf [c0(t) - c0(-t)] dt``.

``C_FLAT = -1/(8 pi)`` is the value for which ``box Dflat = D`` holds with
the normalization of :mod:`gaussfield.propagators`; the lattice oracle
below checks the magnitude independently.
"""
from __future__ import annotations

import threading

import numpy as np
from numpy.polynomial import chebyshev as C
from numpy.polynomial.legendre import leggauss

from . import kernels
from .quadrature import cheb_coefficients, cheb_nodes, tanh_nodes
from .testfn import TestFn, factor_interval, factor_value, spacelike_separated

C_FLAT = -1.0 / (8.0 * np.pi)


class Correlation1D:
    """``c(z) = int F_a(y) F_b(y - z) dy`` with its running integral.

    Both are piecewise Chebyshev interpolants on the support
    ``[lo_a - hi_b, hi_a - lo_b]``.
    """

    DEG = 24

    def __init__(self, fa: tuple, fb: tuple, n_overlap: int = 257):
        self.fa, self.fb = fa, fb
        lo_a, hi_a = factor_interval(fa[0], fa[1], fa[4])
        lo_b, hi_b = factor_interval(fb[0], fb[1], fb[4])
        self.lo, self.hi = lo_a - hi_b, hi_a - lo_b
        scale = min(fa[1], fb[1])
        n = max(4, int(np.ceil((self.hi - self.lo) / (0.4 * scale))))
        self.length = (self.hi - self.lo) / n
        t = cheb_nodes(self.DEG)
        z = self.lo + (np.arange(n)[:, None] + 0.5 * (t[None, :] + 1.0)) * self.length
        u, w, _ = tanh_nodes(n_overlap)
        zz = z.ravel()
        a = np.maximum(lo_a, lo_b + zz)
        b = np.minimum(hi_a, hi_b + zz)
        half = np.maximum(0.5 * (b - a), 0.0)
        y = 0.5 * (a + b)[:, None] + half[:, None] * u[None, :]
        vals = factor_value(y, *fa) * factor_value(y - zz[:, None], *fb)
        samples = (half * (vals @ w)).reshape(z.shape)
        self.coef = np.ascontiguousarray(cheb_coefficients(samples))
        # running integral, continuous across pieces, zero at lo
        integ = np.zeros((n, self.DEG + 2))
        offset = 0.0
        for i in range(n):
            ci = C.chebint(self.coef[i], lbnd=-1.0) * (0.5 * self.length)
            integ[i] = ci
            integ[i, 0] += offset
            offset = C.chebval(1.0, integ[i])
        self.icoef = np.ascontiguousarray(integ)
        self.total = offset

    def _eval(self, table, z, below, above):
        z = np.asarray(z, dtype=float)
        out = np.full(z.shape, below)
        out[z >= self.hi] = above
        m = (z > self.lo) & (z < self.hi)
        if np.any(m):
            out[m] = kernels.cheb_eval(table, self.length, z[m] - self.lo)
        return out

    def __call__(self, z):
        return self._eval(self.coef, z, 0.0, 0.0)

    def cumulative(self, z):
        """``int_{-inf}^z c``."""
        return self._eval(self.icoef, z, 0.0, self.total)


_CORR: dict = {}
_CORR_LOCK = threading.Lock()


def correlation(fa: tuple, fb: tuple) -> Correlation1D:
    key = (tuple(float(v) for v in fa), tuple(float(v) for v in fb))
    with _CORR_LOCK:
        c = _CORR.get(key)
    if c is None:
        c = Correlation1D(*key)
        with _CORR_LOCK:
            c = _CORR.setdefault(key, c)
    return c


def _factor(f: TestFn, i: int, mu: int) -> tuple:
    return (f.center[i, mu], f.width[i, mu], f.mono[i, mu], f.pole[i, mu], f.plateau[i, mu])


def _pair_boxes(f: TestFn, g: TestFn):
    """Support box of the correlation ``C(z)`` (Minkowski difference)."""
    bf, bg = f.support().bounding_box(), g.support().bounding_box()
    return bf.lo - bg.hi, bf.hi - bg.lo


def _sphere_frame(lo, hi, n_polar, n_azimuth):
    """Angular nodes covering the cone of directions that meets the box."""
    center = 0.5 * (lo + hi)
    rad = 0.5 * np.linalg.norm(hi - lo)
    dist = np.linalg.norm(center)
    if dist > rad * 1.0001:
        cos_a = np.sqrt(max(0.0, 1.0 - (rad / dist) ** 2))
        e3 = center / dist
    else:
        cos_a = -1.0
        e3 = np.array([0.0, 0.0, 1.0])
    helper = np.array([1.0, 0.0, 0.0]) if abs(e3[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(e3, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(e3, e1)
    x, w = leggauss(n_polar)
    ct = 0.5 * (1.0 - cos_a) * (x + 1.0) + cos_a
    wt = 0.5 * (1.0 - cos_a) * w
    st = np.sqrt(np.maximum(0.0, 1.0 - ct * ct))
    ph = 2.0 * np.pi * np.arange(n_azimuth) / n_azimuth
    dirs = (st[:, None, None] * np.cos(ph)[None, :, None] * e1
            + st[:, None, None] * np.sin(ph)[None, :, None] * e2
            + ct[:, None, None] * e3)
    weights = (wt[:, None] * np.full(n_azimuth, 2.0 * np.pi / n_azimuth)[None, :]).ravel()
    return dirs.reshape(-1, 3), weights


def _radial_range(lo, hi):
    """Distance range from the origin to the spatial box."""
    gap = np.maximum(0.0, np.maximum(lo, -hi))
    far = np.maximum(np.abs(lo), np.abs(hi))
    return float(np.linalg.norm(gap)), float(np.linalg.norm(far))


def _radial_integral(f: TestFn, g: TestFn, weight_fn, r_cap, spec) -> float:
    """``sum_ab c_a c_b int_{R} dR int dOmega weight_ab(R) prod_i c_i(R n_i)``."""
    if f.is_zero or g.is_zero:
        return 0.0
    lo, hi = _pair_boxes(f, g)
    r0, r1 = _radial_range(lo[1:], hi[1:])
    r1 = min(r1, r_cap(lo[0], hi[0]))
    if r1 <= r0:
        return 0.0
    dirs, wang = _sphere_frame(lo[1:], hi[1:], spec.lc_polar, spec.lc_azimuth)
    u, wu, _ = tanh_nodes(spec.lc_radial)
    half = 0.5 * (r1 - r0)
    R = 0.5 * (r0 + r1) + half * u
    wR = half * wu
    pts = R[:, None, None] * dirs[None, :, :]  # (nR, nang, 3)
    cache: dict = {}

    def spatial(i, k, mu):
        key = (mu, _factor(f, i, mu), _factor(g, k, mu))
        v = cache.get(key)
        if v is None:
            v = cache[key] = correlation(key[1], key[2])(pts[:, :, mu - 1])
        return v

    total = 0.0
    for i in range(f.n_atoms):
        for k in range(g.n_atoms):
            c0 = correlation(_factor(f, i, 0), _factor(g, k, 0))
            wr = weight_fn(c0, R) * wR
            if not np.any(wr):
                continue
            s = spatial(i, k, 1) * spatial(i, k, 2)
            s *= spatial(i, k, 3)
            total += f.coef[i] * g.coef[k] * float(wr @ (s @ wang))
    return total


def pair_D_position(rho1: TestFn, rho2: TestFn, spec) -> float:
    """``<rho1, D rho2>`` from the light-cone representation of ``D``."""
    _check_scalar(rho1, rho2)

    def weight(c0, R):
        return R * (c0(-R) - c0(R)) / (4.0 * np.pi)

    return _radial_integral(rho1, rho2, weight, lambda t0, t1: max(abs(t0), abs(t1)), spec)


def pair_Dflat_oneside(rho1: TestFn, rho2: TestFn, spec) -> float:
    """Unsymmetrized ``<rho1, Dflat rho2>`` (see :func:`pair_Dflat`)."""

    def weight(c0, R):
        H = c0.total - c0.cumulative(R) - c0.cumulative(-R)
        return C_FLAT * R * R * H

    return _radial_integral(rho1, rho2, weight, lambda t0, t1: max(abs(t0), abs(t1)), spec)


def _unit_atom(f: TestFn, i: int) -> TestFn:
    return TestFn._raw("scalar", np.ones(1), np.zeros(1, dtype=int), f.center[i:i + 1],
                       f.width[i:i + 1], f.mono[i:i + 1], f.pole[i:i + 1], f.plateau[i:i + 1])


_ATOM_PAIRS: dict = {}
_PAIR_LOCK = threading.Lock()


def _atom_key(f: TestFn, i: int) -> tuple:
    return tuple(_factor(f, i, mu) for mu in range(4))


def _dflat_atoms(a: TestFn, b: TestFn, spec) -> float:
    if spacelike_separated(a, b):
        return 0.0
    return 0.5 * (pair_Dflat_oneside(a, b, spec) - pair_Dflat_oneside(b, a, spec))


def pair_Dflat(rho1: TestFn, rho2: TestFn, spec) -> float:
    """``<rho1, Dflat rho2>`` with ``Dflat = C_FLAT sign(z0) theta(z^2)``.

    Summed over atom pairs, each with its own node set, so the result is
    bilinear in the atom coefficients.  Exactly zero for certified
    spacelike atom pairs and exactly antisymmetric under exchange.
    """
    _check_scalar(rho1, rho2)
    total = 0.0
    for i in range(rho1.n_atoms):
        ki = _atom_key(rho1, i)
        for k in range(rho2.n_atoms):
            kk = _atom_key(rho2, k)
            flip = kk < ki
            key = (kk, ki, spec) if flip else (ki, kk, spec)
            with _PAIR_LOCK:
                v = _ATOM_PAIRS.get(key)
            if v is None:
                a, b = _unit_atom(rho1, i), _unit_atom(rho2, k)
                if flip:
                    a, b = b, a
                v = _dflat_atoms(a, b, spec)
                with _PAIR_LOCK:
                    _ATOM_PAIRS[key] = v
            total += rho1.coef[i] * rho2.coef[k] * (-v if flip else v)
    return float(total)


def clear_cache() -> None:
    with _PAIR_LOCK:
        _ATOM_PAIRS.clear()


def _check_scalar(a, b):
    if a.rank != "scalar" or b.rank != "scalar":
        raise ValueError("light-cone pairings take scalar test functions")


# ---------------------------------------------------------------------------
# lattice oracle

def retarded_lattice(source, n: int = 32, half: float = 4.0, t0: float = 0.0, steps: int = 32):
    """Solve ``box u = s`` then ``box v = u`` with zero data before ``t0``.

    Leapfrog on an ``n^3`` periodic-free (Dirichlet) lattice of half-size
    ``half`` with ``dt = h/2``.  Returns ``(times, x, v_center_history,
    v_final)`` where ``v`` approximates ``(D_r' * D_r' * s)``.
    """
    h = 2.0 * half / n
    dt = 0.5 * h
    x = -half + h * (np.arange(n) + 0.5)
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    pts = np.stack([np.zeros(X.size), X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def src(t):
        pts[:, 0] = t
        return source(pts).reshape(X.shape)

    def lap(a):
        out = -6.0 * a
        out[1:] += a[:-1]
        out[:-1] += a[1:]
        out[:, 1:] += a[:, :-1]
        out[:, :-1] += a[:, 1:]
        out[:, :, 1:] += a[:, :, :-1]
        out[:, :, :-1] += a[:, :, 1:]
        return out / (h * h)

    u_prev = np.zeros(X.shape)
    u = np.zeros(X.shape)
    v_prev = np.zeros(X.shape)
    v = np.zeros(X.shape)
    times = [t0]
    for k in range(steps):
        t = t0 + k * dt
        u_next = 2.0 * u - u_prev + dt * dt * (lap(u) + src(t))
        v_next = 2.0 * v - v_prev + dt * dt * (lap(v) + u)
        u_prev, u = u, u_next
        v_prev, v = v, v_next
        times.append(t + dt)
    return np.array(times), x, v


def cone_convolution(source, x, n_t: int = 48, n_r: int = 48, n_ang: int = 24) -> float:
    """``(theta(t - |z|) * s)(x) = int_{past cone} s`` at one point ``x``."""
    x = np.asarray(x, dtype=float)
    return _solid_cone(source, x, n_t, n_r, n_ang, direction=-1.0)


def _solid_cone(source, x, n_t, n_r, n_ang, direction, t_range=None):
    t_lo, t_hi = t_range if t_range is not None else (0.0, 8.0)
    xt, wt = leggauss(n_t)
    T = t_lo + 0.5 * (t_hi - t_lo) * (xt + 1.0)
    WT = 0.5 * (t_hi - t_lo) * wt
    xr, wr = leggauss(n_r)
    ct, wc = leggauss(n_ang)
    ph = 2.0 * np.pi * np.arange(2 * n_ang) / (2 * n_ang)
    st = np.sqrt(1.0 - ct * ct)
    dirs = np.stack([(st[:, None] * np.cos(ph)).ravel(), (st[:, None] * np.sin(ph)).ravel(),
                     np.repeat(ct, len(ph))], axis=1)
    wdir = (wc[:, None] * np.full(len(ph), 2.0 * np.pi / len(ph))).ravel()
    total = 0.0
    for t, wtt in zip(T, WT):
        R = 0.5 * t * (xr + 1.0)
        WR = 0.5 * t * wr * R * R
        z = R[:, None, None] * dirs[None, :, :]
        pts = np.empty(z.shape[:2] + (4,))
        pts[..., 0] = x[0] + direction * t
        pts[..., 1:] = x[1:] - z
        vals = source(pts.reshape(-1, 4)).reshape(z.shape[:2])
        total += wtt * float(WR @ (vals @ wdir))
    return total


def lattice_oracle(source_fn: TestFn, point, n: int = 32, half: float = 4.0, steps: int = 32,
                   t0: float = 0.0) -> dict:
    """Compare the lattice ``D_r' * D_r' * s`` with ``theta/(8 pi) * s``.

    The evaluation ``point`` must be a lattice site time/position reachable
    within ``steps`` leapfrog steps; it is snapped to the nearest site.
    """
    def src(p):
        return source_fn.evaluate(p)[:, 0]

    times, x, v = retarded_lattice(src, n=n, half=half, t0=t0, steps=steps)
    idx = [int(np.argmin(np.abs(x - c))) for c in point[1:]]
    site = np.array([times[-1], x[idx[0]], x[idx[1]], x[idx[2]]])
    lattice_val = float(v[tuple(idx)])
    bb = source_fn.support().bounding_box()
    t_hi = max(0.0, site[0] - bb.lo[0])
    t_lo = max(0.0, site[0] - bb.hi[0])
    closed = _solid_cone(src, site, 64, 48, 24, direction=-1.0, t_range=(t_lo, t_hi)) / (8.0 * np.pi)
    return {"site": site.tolist(), "lattice": lattice_val, "closed_form": closed,
            "rel_diff": abs(lattice_val - closed) / max(abs(closed), 1e-300)}
