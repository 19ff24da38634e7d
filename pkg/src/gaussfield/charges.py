"""External charge distributions, dipole functions and the Gauss readout.

A charge ``theta`` is paired with a compensating copy ``theta * sigma_r``
carried off towards spacelike infinity.  The vector function ``m``
connecting the two satisfies ``d_mu m^mu = theta - theta * sigma_r``; its
Fourier transform on the light cone reduces to a one dimensional
integral of ``sigma~^mu`` along the ray through ``p``.
"""
from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numpy.polynomial import chebyshev as C

from .propagators import (QuadratureSpec, default_spec, pair_D,
                          with_error)
from .quadrature import (QuadratureError, cheb_coefficients, cheb_nodes,
                         gauss_legendre, tanh_nodes)
from .testfn import (METRIC, Box, SupportRegion, TestFn, coderivative1, convolve_at,
                     coordinate_multiply, factor_integral, factor_interval, factor_value,
                     spacelike_separated)

ORIGIN_BOX = Box((-1e-3,) * 4, (1e-3,) * 4)


class ChargeError(ValueError):
    """A charge configuration violates its invariants."""


@dataclass(frozen=True)
class ChargeConfig:
    """Charge ``theta``, compensator profile ``sigma`` (unit integral,
    spacelike to the origin) and separation scale ``r``."""

    theta: TestFn
    sigma: TestFn
    r: float = 1.0

    def __post_init__(self):
        for name in ("theta", "sigma"):
            if getattr(self, name).rank != "scalar":
                raise ChargeError(f"{name} must be a scalar test function")
        if not self.r > 0:
            raise ChargeError("r must be positive")
        total = float(self.sigma.integral()[0])
        if abs(total - 1.0) > 1e-6:
            raise ChargeError(f"sigma must integrate to 1 (got {total:.12g})")
        if not spacelike_separated(self.sigma.support(), SupportRegion((ORIGIN_BOX,))):
            raise ChargeError("sigma must be supported spacelike to the origin")

    @property
    def charge(self) -> float:
        return float(self.theta.integral()[0])

    def with_r(self, r: float) -> "ChargeConfig":
        return ChargeConfig(self.theta, self.sigma, r)

    def digest(self) -> str:
        h = hashlib.sha1()
        h.update(self.theta.digest().encode())
        h.update(self.sigma.digest().encode())
        h.update(repr(float(self.r)).encode())
        return h.hexdigest()


def minkowski_sum(a: SupportRegion, b: SupportRegion) -> SupportRegion:
    return SupportRegion(tuple(
        Box(tuple(np.add(x.lo, y.lo)), tuple(np.add(x.hi, y.hi))) for x in a.boxes for y in b.boxes))


class _RayTable:
    """Piecewise Chebyshev antiderivatives of ``u -> sigma~^mu(u n)`` for
    every shell direction ``n = (1, p/|p|)/sqrt(2)`` of a grid.

    Directions are processed in chunks.  The coefficient table is kept when
    it fits in ``budget`` bytes; larger tables are rebuilt chunk by chunk
    on every :meth:`cumulative` call.
    """

    DEG = 32

    def __init__(self, sigma: TestFn, grid, tol: float = 1e-13, max_panels: int = 4096,
                 budget: int = 256 << 20, chunk: int = 512):
        self.sigma_mu = [coordinate_multiply(sigma, mu) for mu in range(4)]
        ux, uy, uz = (np.broadcast_to(c, (1, grid.shape[1], grid.shape[2]))[0].ravel()
                      for c in grid.unit_p())
        self.n = np.stack([np.ones_like(ux), ux, uy, uz], axis=1) / np.sqrt(2.0)
        bb = sigma.support().bounding_box()
        bmax = float(np.linalg.norm(np.maximum(np.abs(bb.lo), np.abs(bb.hi))))
        wmin = float(sigma.min_width())
        self.length = min(4.0, 12.0 / max(bmax, 1e-9), 4.0 * wmin * np.sqrt(2.0) + 1.0)
        self.tol = tol
        self.max_panels = max_panels
        ndir = self.n.shape[0]
        self.chunks = [slice(s, min(s + chunk, ndir)) for s in range(0, ndir, chunk)]
        first = self._build(self.n[self.chunks[0]])
        per_dir = first[0].nbytes / max(1, self.chunks[0].stop)
        self.stored = per_dir * ndir <= budget
        self._tables = [first] + ([self._build(self.n[c]) for c in self.chunks[1:]] if self.stored else [])
        self._rho = np.concatenate([t[1][:, :, -1] for t in self._tables], axis=1) if self.stored else None
        self.u_max = max(t[0].shape[2] for t in self._tables) * self.length

    def _build(self, n: np.ndarray):
        """``(icoef (4, nd, P, DEG+2), prefix (4, nd, P+1))`` for directions ``n``."""
        t = cheb_nodes(self.DEG)
        nd = n.shape[0]
        panels, peak = [], 0.0
        block = 4
        while True:
            start = len(panels) * block
            if start >= self.max_panels:
                raise QuadratureError("ray table for sigma did not decay")
            u = (start + np.arange(block)[:, None] + 0.5 * (t[None, :] + 1.0)) * self.length
            mom = (u.ravel()[:, None, None] * n[None, :, :]).reshape(-1, 4)
            vals = np.stack([s.fourier(mom)[:, 0] for s in self.sigma_mu])
            vals = vals.reshape(4, block, self.DEG + 1, nd).transpose(1, 0, 3, 2)
            mags = np.max(np.abs(vals), axis=(1, 2, 3))
            peak = max(peak, float(mags.max()))
            panels.append(vals)
            if start > 0 and mags.max() < self.tol * peak:
                break
        vals = np.concatenate(panels, axis=0)  # (P, 4, nd, DEG+1)
        del panels
        coef = cheb_coefficients(vals.real) + 1j * cheb_coefficients(vals.imag)
        del vals
        icoef = C.chebint(coef, axis=-1, lbnd=-1.0) * (0.5 * self.length)
        del coef
        totals = C.chebval(1.0, np.moveaxis(icoef, -1, 0))  # (P, 4, nd)
        prefix = np.concatenate([np.zeros((1,) + totals.shape[1:], complex),
                                 np.cumsum(totals, axis=0)], axis=0)
        return (np.ascontiguousarray(np.moveaxis(icoef, 0, 2)),
                np.ascontiguousarray(np.moveaxis(prefix, 0, 2)))

    def _tables_iter(self):
        if self.stored:
            yield from zip(self.chunks, self._tables)
        else:
            for i, c in enumerate(self.chunks):
                yield c, (self._tables[0] if i == 0 else self._build(self.n[c]))

    @property
    def rho(self) -> np.ndarray:
        """``int_0^inf sigma~^mu(u n_j) du``, shape (4, ndir)."""
        if self._rho is None:
            self._rho = np.concatenate([tab[1][:, :, -1] for _, tab in self._tables_iter()], axis=1)
        return self._rho

    def cumulative(self, U: np.ndarray, chunk: int = 48) -> np.ndarray:
        """``int_0^U sigma~^mu(u n_j) du`` for ``U`` of shape (nU,); returns
        (4, nU, ndir)."""
        U = np.asarray(U, dtype=float).ravel()
        out = np.empty((4, U.size, self.n.shape[0]), complex)
        rho = [] if self._rho is None else None
        for c, (icoef, prefix) in self._tables_iter():
            for s in range(0, U.size, chunk):
                out[:, s:s + chunk, c] = self._cumulative(icoef, prefix, U[s:s + chunk])
            if rho is not None:
                rho.append(prefix[:, :, -1])
        if rho is not None:
            self._rho = np.concatenate(rho, axis=1)
        return out

    def _cumulative(self, icoef, prefix, U):
        n_panels = icoef.shape[2]
        idx = np.minimum((U / self.length).astype(int), n_panels)
        inside = idx < n_panels
        ic = np.where(inside, idx, 0)
        x = np.where(inside, 2.0 * (U - ic * self.length) / self.length - 1.0, 1.0)
        out = np.empty((4, U.size, icoef.shape[1]), complex)
        for mu in range(4):
            c = icoef[mu][:, ic, :]  # (nd, nU, DEG+2)
            b1 = np.zeros(c.shape[:2], complex)
            b2 = np.zeros_like(b1)
            for k in range(c.shape[-1] - 1, 0, -1):
                b1, b2 = c[..., k] + 2.0 * x[None, :] * b1 - b2, b1
            val = c[..., 0] + x[None, :] * b1 - b2
            val = np.where(inside[None, :], val + prefix[mu][:, ic], prefix[mu][:, -1:])
            out[mu] = val.T
        return out


_RAYS: dict = {}
_RAY_LOCK = threading.Lock()


def ray_table(sigma: TestFn, grid) -> _RayTable:
    key = (sigma.digest(), grid.spec)
    with _RAY_LOCK:
        tab = _RAYS.get(key)
    if tab is None:
        tab = _RayTable(sigma, grid)
        with _RAY_LOCK:
            _RAYS[key] = tab
    return tab


def _u_window(x, sint, aint):
    """Range of ``u`` in [0, 1] for which ``x - u b`` can meet supp theta
    with ``b`` in supp sigma_r (per axis, intersected)."""
    lo_u, hi_u = 0.0, 1.0
    for nu in range(4):
        (blo, bhi), (alo, ahi) = sint[nu], aint[nu]
        A, B = x[nu] - alo, x[nu] - ahi  # need u*blo <= A and u*bhi >= B
        for coef, bound, upper in ((blo, A, True), (bhi, B, False)):
            if coef == 0.0:
                ok = bound >= 0.0 if upper else bound <= 0.0
                if not ok:
                    return 0.0, 0.0
                continue
            lim = bound / coef
            if (coef > 0) == upper:
                hi_u = min(hi_u, lim)
            else:
                lo_u = max(lo_u, lim)
    return lo_u, hi_u


def _split_gl(a: float, b: float, n: int, pieces: int = 4):
    edges = np.linspace(a, b, pieces + 1)
    parts = [gauss_legendre(n, lo, hi) for lo, hi in zip(edges[:-1], edges[1:])]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _u_rule(length: float, scale: float):
    n = int(min(4000, max(24, np.ceil(length * scale * 1.2) + 24)))
    return gauss_legendre(n, 0.0, length)


class DipoleFn:
    """The vector function ``m(sigma_r)`` of a :class:`ChargeConfig`.

    Components follow the TestFn convention (covariant ``m_mu``).  The
    object can be handed to every pairing in :mod:`gaussfield.propagators`.
    """

    rank = "vector"

    def __init__(self, cfg: ChargeConfig):
        self.cfg = cfg
        self.theta = cfg.theta
        self.sigma = cfg.sigma
        self.r = float(cfg.r)
        self.charge = cfg.charge
        self._sigma_mu = [coordinate_multiply(cfg.sigma, mu) for mu in range(4)]
        self._digest = hashlib.sha1(("dipole:" + cfg.digest()).encode()).hexdigest()

    def digest(self) -> str:
        return self._digest

    def with_r(self, r: float) -> "DipoleFn":
        return DipoleFn(self.cfg.with_r(r))

    # momentum space ------------------------------------------------------
    def shell_values(self, grid) -> np.ndarray:
        tab = ray_table(self.sigma, grid)
        U = self.r * np.sqrt(2.0) * grid.p
        F = tab.cumulative(U).reshape((4,) + grid.shape)
        th = grid.amplitude(self.theta).values[0]
        pref = (2.0 * np.pi) ** 2 * th / (np.sqrt(2.0) * grid.p[:, None, None])
        return METRIC[:, None, None, None] * pref[None] * F

    def limit_shell_values(self, grid) -> np.ndarray:
        """Shell values of the singular limit ``m(sigma_inf)``."""
        tab = ray_table(self.sigma, grid)
        rho = tab.rho.reshape(4, 1, grid.shape[1], grid.shape[2])
        th = grid.amplitude(self.theta).values[0]
        pref = (2.0 * np.pi) ** 2 * th / (np.sqrt(2.0) * grid.p[:, None, None])
        return METRIC[:, None, None, None] * pref[None] * rho

    def _ray_integral(self, p: np.ndarray, upper: np.ndarray) -> np.ndarray:
        bb = self.sigma.support().bounding_box()
        bmax = float(np.linalg.norm(np.maximum(np.abs(bb.lo), np.abs(bb.hi))))
        scale = bmax + 2.0 / self.sigma.min_width()
        out = np.zeros((p.shape[0], 4), complex)
        for i in range(p.shape[0]):
            pe = np.linalg.norm(p[i])
            if pe == 0.0 or upper[i] == 0.0:
                continue
            n = p[i] / pe
            u, w = _u_rule(upper[i], scale)
            mom = u[:, None] * n[None, :]
            for mu in range(4):
                out[i, mu] = np.sum(w * self._sigma_mu[mu].fourier(mom)[:, 0])
        return out

    def momentum(self, p) -> np.ndarray:
        """``m~_mu(p)`` at arbitrary momenta (M, 4) by the ray integral."""
        p = np.atleast_2d(np.asarray(p, dtype=float))
        pe = np.linalg.norm(p, axis=1)
        upper = self.r * pe
        F = self._ray_integral(p, upper)
        th = self.theta.fourier(p)[:, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            pref = np.where(pe > 0, (2.0 * np.pi) ** 2 * th / pe, 0.0)
        out = pref[:, None] * F * METRIC[None, :]
        if np.any(pe == 0):
            # m~(0) = theta~(0) * r * int sigma b^mu
            mom0 = np.array([[float(s.integral()[0]) for s in self._sigma_mu]])
            out[pe == 0] = (self.theta.fourier(np.zeros((1, 4)))[0, 0] * self.r * mom0 * METRIC)
        return out

    def momentum_direct(self, p, n: int = 48) -> np.ndarray:
        """Oracle: ``theta~(p) int db sigma^mu(b) (e^{i r bp} - 1)/(i bp)``
        by a 4-D tensor rule over each sigma atom (covariant output)."""
        p = np.atleast_2d(np.asarray(p, dtype=float))
        k = p * METRIC  # b.p = sum b^mu k_mu
        u, w, _ = tanh_nodes(n)
        out = np.zeros((p.shape[0], 4), complex)
        s = self.sigma
        for a in range(s.n_atoms):
            axes_b, axes_w = [], []
            for mu in range(4):
                fa = (s.center[a, mu], s.width[a, mu], s.mono[a, mu], s.pole[a, mu], s.plateau[a, mu])
                lo, hi = factor_interval(fa[0], fa[1], fa[4])
                b = 0.5 * (lo + hi) + 0.5 * (hi - lo) * u
                axes_b.append(b)
                axes_w.append(0.5 * (hi - lo) * w * factor_value(b, *fa))
            B = np.stack(np.meshgrid(*axes_b, indexing="ij"), axis=-1).reshape(-1, 4)
            Wt = s.coef[a] * np.einsum("i,j,k,l->ijkl", *axes_w).ravel()
            for i in range(p.shape[0]):
                bp = B @ k[i]
                z = self.r * bp
                small = np.abs(z) < 1e-6
                kern = np.where(small, self.r * (1.0 + 0.5j * z),
                                (np.exp(1j * np.where(small, 1.0, z)) - 1.0) / (1j * np.where(small, 1.0, bp)))
                out[i] += (Wt * kern) @ B
        th = self.theta.fourier(p)[:, 0]
        return th[:, None] * out * METRIC[None, :]

    # position space ------------------------------------------------------
    def evaluate(self, x, n_c: int = 65, n_u: int = 24) -> np.ndarray:
        """``m_mu(x) = eta_mu int db sigma_r(b) b^mu int_0^1 du theta(x - u b)``.

        Each term is a product over axes of 1-D integrals in ``b_nu``, so
        only the ``u`` integral couples the axes.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        sr = self.sigma.scale(self.r)
        th = self.theta
        uc, wc, _ = tanh_nodes(n_c)
        out = np.zeros((x.shape[0], 4))
        for s in range(sr.n_atoms):
            for a in range(th.n_atoms):
                fs = [(sr.center[s, nu], sr.width[s, nu], sr.mono[s, nu], sr.pole[s, nu], sr.plateau[s, nu])
                      for nu in range(4)]
                fa = [(th.center[a, nu], th.width[a, nu], th.mono[a, nu], th.pole[a, nu], th.plateau[a, nu])
                      for nu in range(4)]
                sint = [factor_interval(f[0], f[1], f[4]) for f in fs]
                aint = [factor_interval(f[0], f[1], f[4]) for f in fa]
                coef = sr.coef[s] * th.coef[a]
                for ix in range(x.shape[0]):
                    lo_u, hi_u = _u_window(x[ix], sint, aint)
                    if hi_u <= lo_u:
                        continue
                    # J may be nonzero at u = 0 or 1, so Gauss-Legendre rather than tanh
                    uu, wu = _split_gl(lo_u, hi_u, n_u)
                    base, first = [], []
                    for nu in range(4):
                        # b_nu restricted to supp sigma and the preimage of supp theta
                        (blo, bhi), (alo, ahi) = sint[nu], aint[nu]
                        e1, e2 = (x[ix, nu] - ahi) / uu, (x[ix, nu] - alo) / uu
                        lo = np.maximum(blo, np.minimum(e1, e2))
                        hi = np.minimum(bhi, np.maximum(e1, e2))
                        hb = np.maximum(0.5 * (hi - lo), 0.0)
                        bb = 0.5 * (lo + hi)[:, None] + hb[:, None] * uc[None, :]
                        vals = (hb[:, None] * wc[None, :] * factor_value(bb, *fs[nu])
                                * factor_value(x[ix, nu] - uu[:, None] * bb, *fa[nu]))
                        base.append(vals.sum(axis=1))
                        first.append((vals * bb).sum(axis=1))
                    base = np.array(base)
                    first = np.array(first)
                    J = np.empty((4, uu.size))
                    for mu in range(4):
                        J[mu] = np.prod(np.delete(base, mu, axis=0), axis=0) * first[mu]
                    out[ix] += coef * (J @ wu)
        return out * METRIC[None, :]

    def support(self) -> SupportRegion:
        """Bounding region: convex hull of the charge and compensator boxes."""
        both = self.theta.support().union(minkowski_sum(self.theta.support(),
                                                        self.sigma.scale(self.r).support()))
        bb = both.bounding_box()
        return SupportRegion((bb,))


def build_dipole(cfg: ChargeConfig) -> DipoleFn:
    return DipoleFn(cfg)


class ChargeDensity:
    """``delta m(sigma_r) = theta - theta * sigma_r`` (scalar)."""

    rank = "scalar"

    def __init__(self, d: DipoleFn):
        self.dipole = d
        self.theta = d.theta
        self.sigma_r = d.sigma.scale(d.r)
        self._digest = hashlib.sha1(("density:" + d.digest()).encode()).hexdigest()

    def digest(self) -> str:
        return self._digest

    def shell_values(self, grid) -> np.ndarray:
        th = grid.amplitude(self.theta).values
        sg = grid.amplitude(self.sigma_r).values
        return th * (1.0 - (2.0 * np.pi) ** 2 * sg)

    def compensator(self, x) -> np.ndarray:
        """``(theta * sigma_r)(x)`` by direct quadrature."""
        return convolve_at(self.theta, self.sigma_r, x)

    def evaluate(self, x) -> np.ndarray:
        return self.theta.evaluate(x)[..., 0] - self.compensator(x)

    __call__ = evaluate

    def integral(self) -> float:
        return float(self.theta.integral()[0] - self.theta.integral()[0] * self.sigma_r.integral()[0])

    def fixed_support(self) -> SupportRegion:
        return self.theta.support()

    def compensator_support(self) -> SupportRegion:
        return minkowski_sum(self.theta.support(), self.sigma_r.support())

    def components_separated(self) -> bool:
        return spacelike_separated(self.fixed_support(), self.compensator_support())


def charge_density(d: DipoleFn) -> ChargeDensity:
    return ChargeDensity(d)


@dataclass(frozen=True)
class MeasurementFn:
    """``h = (tau chi, 0, 0, 0)`` with ``chi`` a smoothed box indicator.

    ``chi = 1`` on ``|x_i - c_i| <= half_i`` and vanishes beyond a further
    ``margin``.  ``tau`` contributes its time-axis factors only.
    """

    tau: TestFn
    plateau_center: tuple
    plateau_half: tuple
    margin: float
    h: TestFn = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.margin <= 0:
            raise ChargeError("margin must be positive")
        if np.any(np.asarray(self.plateau_half) <= 0):
            raise ChargeError("plateau half-sizes must be positive")
        t = self.tau
        ints = np.array([factor_integral(t.width[i, 0], t.mono[i, 0], t.pole[i, 0], t.plateau[i, 0])
                         for i in range(t.n_atoms)])
        total = float(np.sum(t.coef * ints))
        if abs(total - 1.0) > 1e-6:
            raise ChargeError(f"tau must integrate to 1 over time (got {total:.12g})")
        w = 0.5 * self.margin
        center = t.center.copy()
        width = t.width.copy()
        mono = t.mono.copy()
        pole = t.pole.copy()
        plat = t.plateau.copy()
        center[:, 1:] = np.asarray(self.plateau_center, dtype=float)[None, :]
        width[:, 1:] = w
        mono[:, 1:] = 0
        pole[:, 1:] = 0
        plat[:, 1:] = np.asarray(self.plateau_half, dtype=float)[None, :] + w
        h = TestFn._raw("vector", t.coef, np.zeros(t.n_atoms, dtype=int), center, width, mono, pole, plat)
        object.__setattr__(self, "h", h)

    @property
    def time_interval(self) -> tuple:
        lo, hi = [], []
        for i in range(self.tau.n_atoms):
            a, b = factor_interval(self.tau.center[i, 0], self.tau.width[i, 0], self.tau.plateau[i, 0])
            lo.append(a)
            hi.append(b)
        return min(lo), max(hi)

    def delta_h(self) -> TestFn:
        return coderivative1(self.h)

    def inner_box(self) -> Box:
        c = np.asarray(self.plateau_center, float)
        hw = np.asarray(self.plateau_half, float)
        t0, t1 = self.time_interval
        return Box((t0, *(c - hw)), (t1, *(c + hw)))

    def contains_effectively(self, region: SupportRegion) -> bool:
        """Sufficient condition for ``region`` to be effectively inside the
        measurement: every point's causal shadow over ``supp tau`` stays
        in the plateau."""
        t0, t1 = self.time_interval
        c = np.asarray(self.plateau_center, float)
        hw = np.asarray(self.plateau_half, float)
        for b in region.boxes:
            dt = max(abs(b.hi[0] - t0), abs(t1 - b.lo[0]), abs(b.lo[0] - t0), abs(t1 - b.hi[0]))
            if np.any(np.asarray(b.lo[1:]) - dt < c - hw) or np.any(np.asarray(b.hi[1:]) + dt > c + hw):
                return False
        return True

    def separated_from(self, region: SupportRegion) -> bool:
        return spacelike_separated(region, self.h.support())


class GeometryCase(str, Enum):
    FIXED_INSIDE = "FixedInside"
    BOTH_INSIDE = "BothInside"
    COMPENSATOR_INSIDE = "CompensatorInside"
    INDETERMINATE = "Indeterminate"


def geometry_case(d: DipoleFn, h: MeasurementFn) -> GeometryCase:
    rho = ChargeDensity(d)
    fixed, comp = rho.fixed_support(), rho.compensator_support()
    f_in, c_in = h.contains_effectively(fixed), h.contains_effectively(comp)
    if f_in and c_in:
        return GeometryCase.BOTH_INSIDE
    if f_in and h.separated_from(comp):
        return GeometryCase.FIXED_INSIDE
    if c_in and h.separated_from(fixed):
        return GeometryCase.COMPENSATOR_INSIDE
    return GeometryCase.INDETERMINATE


def expected_readout(case: GeometryCase, charge: float):
    return {GeometryCase.FIXED_INSIDE: charge, GeometryCase.BOTH_INSIDE: 0.0,
            GeometryCase.COMPENSATOR_INSIDE: -charge}.get(case)


def _readout(rho, dh, spec):
    return -pair_D(rho, dh, spec)


def gauss_readout(d: DipoleFn, h: MeasurementFn, spec: QuadratureSpec | None = None) -> float:
    """Charge readout ``-<delta m, D delta h>``.

    With ``delta d h = (tau lap chi, tau' grad chi)`` the functional
    ``phi_m(delta d h) = -<m, D delta d h>`` equals minus this value.
    """
    return _readout(ChargeDensity(d), h.delta_h(), spec or default_spec())


def gauss_readout_with_error(d: DipoleFn, h: MeasurementFn, spec: QuadratureSpec | None = None) -> dict:
    """Readout with its quadrature error and a margin bias estimate.

    The bias estimate is the charge that no certified predicate accounts
    for: zero for classified geometries, ``|Q|`` otherwise.
    """
    spec = spec or default_spec()
    res = with_error(_readout, ChargeDensity(d), h.delta_h(), spec)
    case = geometry_case(d, h)
    res["case"] = case.value
    res["expected"] = expected_readout(case, d.charge)
    res["margin_bias_estimate"] = 0.0 if case is not GeometryCase.INDETERMINATE else abs(d.charge)
    return res


def phi_m(m, g, spec: QuadratureSpec | None = None) -> float:
    """``phi_m(g) = -<m, D g>`` for a vector TestFn or :class:`DipoleFn` ``m``."""
    return -pair_D(m, g, spec or default_spec())
