"""Scaling limits of dipole functions and c-number energies of shifted vacua.

Everything here lives on the positive zero-mass shell.  A real solution
of the wave equation with shell data ``a`` is written as

    F(t, x) = Re int d^3p C(p) exp(-i|p|t + i p.x),   C = -i a / (2 pi |p|),

so that ``F = D a`` in the convention of :mod:`gaussfield.propagators`.
Spatial integrals of products then follow from Parseval, including the
term pairing ``p`` with ``-p`` that carries the time dependence.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .charges import ChargeConfig, DipoleFn, MeasurementFn, gauss_readout, ray_table
from .propagators import (C_D, MassShellAmplitude, QuadratureSpec, default_spec, get_grid,
                          pair_D)
from .quadrature import QuadratureError, gauss_legendre
from .testfn import METRIC, TestFn, coderivative1, coordinate_multiply

TWO_PI = 2.0 * np.pi


class InfraredDivergence(ArithmeticError):
    """A shell integral failed to converge at small momenta."""


def _values(m, grid) -> np.ndarray:
    return grid.amplitude(m).values


def _spec(spec):
    return spec or default_spec()


# ---------------------------------------------------------------------------
# seminorms and projections

def _spatial(g, grid) -> np.ndarray:
    v = _values(g, grid)
    if v.shape[0] == 4:
        return v[1:]
    if v.shape[0] == 3:
        return v
    raise ValueError("seminorms act on vector amplitudes")


def _seminorm(g, spec, weight) -> float:
    grid = get_grid(_spec(spec))
    v = _spatial(g, grid)
    w = grid.measure.reshape(grid.shape) * weight(grid.p)[:, None, None]
    return float(np.sqrt(np.sum(w * np.sum(np.abs(v) ** 2, axis=0))))


def seminorm0(g, spec: QuadratureSpec | None = None) -> float:
    """``(int d^3p/(2|p|) sum_j |g~_j(p)|^2)^(1/2)`` over spatial components."""
    return _seminorm(g, spec, np.ones_like)


def mollifier(p):
    return p / np.sqrt(1.0 + p * p)


def seminorm1(g, spec: QuadratureSpec | None = None) -> float:
    """Mollified seminorm with weight ``(p^2/(1+p^2))^(1/2)``."""
    return _seminorm(g, spec, mollifier)


def _unit(grid):
    return np.stack([np.broadcast_to(c, grid.shape) for c in grid.unit_p()])


def transversal_project(m, spec: QuadratureSpec | None = None) -> MassShellAmplitude:
    """Spatial amplitude with the longitudinal part removed; the time
    component is set to zero."""
    grid = get_grid(_spec(spec))
    v = _values(m, grid)
    e = _unit(grid)
    sp = v[1:]
    g = sp - e * np.sum(e * sp, axis=0)[None]
    return MassShellAmplitude(grid, "vector", np.concatenate([np.zeros_like(v[:1]), g]))


def n_from_m0(m, spec: QuadratureSpec | None = None) -> MassShellAmplitude:
    """Shell data of ``n = grad d0 Laplace^-1 m_0``: ``n~_j = -p^j m~_0 / |p|``."""
    grid = get_grid(_spec(spec))
    v = _values(m, grid)
    e = _unit(grid)
    n = -e * v[0][None]
    amp = MassShellAmplitude(grid, "vector", np.concatenate([np.zeros_like(v[:1]), n]))
    if not np.isfinite(seminorm0(amp, spec)):
        raise InfraredDivergence("seminorm of n does not converge")
    return amp


def pair_D_spatial(a: MassShellAmplitude, b: MassShellAmplitude) -> float:
    """``sum_j <a_j, D b_j>`` (Euclidean sum over spatial components)."""
    w = a.grid.measure
    x = y = 0.0
    for j in range(1, 4):
        ar, ai = a.values[j].real.ravel(), a.values[j].imag.ravel()
        br, bi = b.values[j].real.ravel(), b.values[j].imag.ravel()
        x += float(np.sum(w * ar * bi))
        y += float(np.sum(w * ai * br))
    return 2.0 * C_D * (x - y)


def n_phase_identity(m, f: TestFn, spec: QuadratureSpec | None = None) -> tuple[float, float]:
    """Both sides of the electric-field phase of ``beta_{m_0}``.

    Returns ``(<n, D d0 f>, int (D m_0) (delta f))`` with ``f`` restricted to
    its spatial components; the two agree when ``n`` carries the right sign.
    """
    spec = _spec(spec)
    grid = get_grid(spec)
    fs = TestFn.vector([TestFn.zero()] + [f.component(j) for j in range(1, 4)])
    dtf = TestFn.vector([TestFn.zero()] + [_partial0(f.component(j)) for j in range(1, 4)])
    lhs = pair_D_spatial(n_from_m0(m, spec), grid.amplitude(dtf))
    m0 = MassShellAmplitude(grid, "scalar", _values(m, grid)[:1])
    rhs = pair_D(coderivative1(fs), m0, spec)
    return lhs, rhs


def _partial0(s: TestFn) -> TestFn:
    from .testfn import partial
    return partial(s, 0)


# ---------------------------------------------------------------------------
# energies

def _potential(a: np.ndarray, grid) -> np.ndarray:
    return -1j * a / (TWO_PI * grid.p[:, None, None])


def _bilinear(grid, A: np.ndarray, B: np.ndarray, t: float) -> float:
    """``int d^3x F G`` at time ``t`` for ``F = Re int A e^{-i|p|t+ipx}`` etc."""
    d3p = 2.0 * grid.p[:, None, None] * grid.measure.reshape(grid.shape)
    direct = np.sum(d3p * (A * np.conj(B))).real
    osc = np.sum(d3p * A * grid.reflect(B) * np.exp(-2j * grid.p[:, None, None] * t)).real
    return 0.5 * TWO_PI ** 3 * (direct + osc)


def _field_energy(grid, fields, t) -> float:
    return 0.5 * sum(_bilinear(grid, F, F, t) for F in fields)


def _em_fields(v: np.ndarray, grid):
    """Amplitudes of ``d0 m_j - d_j m_0`` and ``curl m`` for ``m = D m``."""
    C = _potential(v, grid)
    P = grid.p[:, None, None]
    pj = [np.broadcast_to(c, grid.shape) for c in grid.pvec[1:]]
    E = [-1j * P * C[j + 1] - 1j * pj[j] * C[0] for j in range(3)]
    B = [1j * (pj[1] * C[3] - pj[2] * C[2]),
         1j * (pj[2] * C[1] - pj[0] * C[3]),
         1j * (pj[0] * C[2] - pj[1] * C[1])]
    L = -1j * P * C[0] - 1j * sum(pj[j] * C[j + 1] for j in range(3))
    return E, B, L


def energy_shift_I(m, t: float, spec: QuadratureSpec | None = None, h: float = 1e-3):
    """``(middle_term_check, cnumber)`` of the transversal-field energy.

    ``cnumber`` is half the spatial integral of ``(d0 m - grad m_0)^2 +
    (curl m)^2`` at time ``t`` for ``m = D m``.  ``middle_term_check`` is the
    relative time derivative of ``int (E d0 m - (d0 E) m)`` with ``E``
    replaced by the shift field itself, a c-number footprint of the cross
    term that must be time independent.
    """
    grid = get_grid(_spec(spec))
    v = _values(m, grid)
    E, B, _ = _em_fields(v, grid)
    cnum = _field_energy(grid, E + B, t)

    C = _potential(v, grid)
    P = grid.p[:, None, None]

    def wronskian(tt):
        tot = 0.0
        for j in range(3):
            tot += _bilinear(grid, E[j], -1j * P * C[j + 1], tt) - _bilinear(grid, -1j * P * E[j], C[j + 1], tt)
        return tot

    scale = max(abs(cnum), 1e-300)
    check = abs(wronskian(t + h) - wronskian(t - h)) / (2.0 * h) / scale
    return float(check), float(cnum)


def longitudinal_energy(m, t: float, spec: QuadratureSpec | None = None) -> float:
    """``(1/2) int (D delta m)^2`` at time ``t``."""
    grid = get_grid(_spec(spec))
    _, _, L = _em_fields(_values(m, grid), grid)
    return _field_energy(grid, [L], t)


def energy_shift_II(m, t: float, spec: QuadratureSpec | None = None) -> float:
    """c-number energy of the shifted vacuum for the density
    ``(1/2)(E^2 + sum_k grad A_k grad A_k)``, shifted by ``D(n - m)``."""
    spec = _spec(spec)
    grid = get_grid(spec)
    v = _values(m, grid)
    nv = n_from_m0(m, spec).values
    C = _potential(nv[1:] - v[1:], grid)
    P = grid.p[:, None, None]
    pj = [np.broadcast_to(c, grid.shape) for c in grid.pvec[1:]]
    fields = [-1j * P * C[j] for j in range(3)]
    fields += [1j * pj[k] * C[j] for j in range(3) for k in range(3)]
    return float(_field_energy(grid, fields, t))


# ---------------------------------------------------------------------------
# limits

def rho_dir(sigma: TestFn, n, tol: float = 1e-13, max_panels: int = 20000) -> np.ndarray:
    """``rho^mu(n) = int_0^inf sigma~^mu(u n) du`` for a unit 4-vector ``n``.

    Gauss-Legendre panels sized to the oscillation of ``sigma~`` along the
    ray; integration stops once a panel contributes below ``tol`` relative
    to the running maximum of the integrand.
    """
    n = np.asarray(n, dtype=float)
    if abs(np.linalg.norm(n) - 1.0) > 1e-9:
        raise ValueError("n must be a Euclidean unit vector")
    if sigma.is_zero:
        return np.zeros(4, complex)
    smu = [coordinate_multiply(sigma, mu) for mu in range(4)]
    bb = sigma.support().bounding_box()
    bmax = float(np.linalg.norm(np.maximum(np.abs(bb.lo), np.abs(bb.hi))))
    length = min(4.0, 12.0 / max(bmax, 1e-9))
    total = np.zeros(4, complex)
    peak = 0.0
    for k in range(max_panels):
        u, w = gauss_legendre(40, k * length, (k + 1) * length)
        vals = np.array([s.fourier(u[:, None] * n[None, :])[:, 0] for s in smu])
        total += vals @ w
        mag = float(np.max(np.abs(vals)))
        peak = max(peak, mag)
        if k > 0 and mag < tol * peak:
            return total
    raise QuadratureError("rho_dir: sigma~ did not decay along the ray")


@dataclass
class LimitProfile:
    """``rho^mu`` on the angular nodes of a grid, with the charge it serves."""

    theta: TestFn
    sigma: TestFn
    spec: QuadratureSpec
    rho: np.ndarray = field(repr=False)  # (4, n_polar, n_azimuth), contravariant

    @classmethod
    def build(cls, theta: TestFn, sigma: TestFn, spec: QuadratureSpec | None = None):
        spec = _spec(spec)
        tab = ray_table(sigma, get_grid(spec))
        return cls(theta, sigma, spec, tab.rho.reshape(4, spec.n_polar, spec.n_azimuth))

    @property
    def bound(self) -> float:
        return float(np.max(np.abs(self.rho)))

    def amplitude(self) -> MassShellAmplitude:
        """Shell data of the singular limit ``m(sigma_inf)`` (covariant)."""
        grid = get_grid(self.spec)
        th = grid.amplitude(self.theta).values[0]
        pref = TWO_PI ** 2 * th / (np.sqrt(2.0) * grid.p[:, None, None])
        return MassShellAmplitude(grid, "vector", METRIC[:, None, None, None] * pref[None] * self.rho[:, None])


def limit_functional(theta: TestFn, sigma: TestFn, f: TestFn, spec: QuadratureSpec | None = None) -> float:
    """``(2pi)^3 Im int d^3p/(sqrt2 |p|^2) theta~(p) rho^mu(n) f~_mu(-p)`` on the shell.

    With ``d^3p = |p|^2 d|p| dOmega`` the integrand is bounded at ``p = 0``.
    """
    spec = _spec(spec)
    grid = get_grid(spec)
    prof = LimitProfile.build(theta, sigma, spec)
    th = grid.amplitude(theta).values[0]
    fv = grid.amplitude(f).values
    rf = np.sum(prof.rho[:, None] * np.conj(fv), axis=0)  # rho^mu f~_mu(-p) for real f
    w = np.sqrt(2.0) * grid.measure.reshape(grid.shape) / grid.p[:, None, None]
    return float(TWO_PI ** 3 * np.sum(w * th * rf).imag)


def finite_r_functional(cfg: ChargeConfig, f: TestFn, spec: QuadratureSpec | None = None) -> float:
    """``phi_{m(sigma_r)}(f) = -<m(sigma_r), D f>``."""
    return -pair_D(DipoleFn(cfg), f, _spec(spec))


def richardson(values, ratio: float = 2.0) -> dict:
    """Extrapolate a sequence on geometric ``r`` with the empirical order.

    Uses the last three values; falls back to the last value when the
    increments do not shrink.
    """
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        return {"value": float(v[-1]), "order": float("nan"), "error": float("inf")}
    d1, d2 = v[-2] - v[-3], v[-1] - v[-2]
    if d1 == 0.0 or d2 == 0.0 or abs(d2) >= abs(d1):
        return {"value": float(v[-1]), "order": float("nan"), "error": float(abs(d2))}
    order = float(np.log(abs(d1 / d2)) / np.log(ratio))
    ext = v[-1] + d2 / (ratio ** order - 1.0)
    return {"value": float(ext), "order": order, "error": float(abs(ext - v[-1]))}


def cocycle_diag(theta: TestFn, sigma: TestFn, r: float, t: float,
                 spec: QuadratureSpec | None = None) -> tuple[float, float]:
    """``(angle, residual0)`` of the cocycle ``V(g) V(g_t)^*``."""
    spec = _spec(spec)
    g = transversal_project(DipoleFn(ChargeConfig(theta, sigma, r)), spec)
    if t == 0:
        return 0.0, 0.0
    diff = g - g.time_shift(t)
    angle = -0.5 * pair_D(g, diff, spec)
    return float(angle), seminorm0(diff, spec)


@dataclass
class ConvergenceReport:
    r_grid: list
    t_grid: list
    seminorm1_distance: list
    seminorm1_relative: list
    seminorm0_increments: list
    seminorm0_error: list
    seminorm1_error: list = field(default_factory=list)
    finite_r_functional: list = field(default_factory=list)
    functional_error: list = field(default_factory=list)
    limit_value: float | None = None
    limit_error: float | None = None
    richardson: dict | None = None
    gauss_readouts: list = field(default_factory=list)
    energy_I: list = field(default_factory=list)
    energy_II: list = field(default_factory=list)
    cocycle_angle: list = field(default_factory=list)
    cocycle_residual0: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def seminorm1_decreasing(self) -> bool:
        d = self.seminorm1_distance
        return all(b < a for a, b in zip(d, d[1:]))


def convergence_report(theta: TestFn, sigma: TestFn, r_grid, t_grid=(), spec: QuadratureSpec | None = None,
                       probe: TestFn | None = None, measurement: MeasurementFn | None = None,
                       energies: bool = True) -> ConvergenceReport:
    """Tabulate the approach of ``m(sigma_r)`` to its limit over ``r_grid``."""
    spec = _spec(spec)
    r_grid = [float(r) for r in r_grid]
    if any(b <= a for a, b in zip(r_grid, r_grid[1:])):
        raise ValueError("r_grid must be strictly increasing")
    coarse = spec.coarse()
    g_inf = transversal_project(LimitProfile.build(theta, sigma, spec).amplitude(), spec)
    g_inf_c = transversal_project(LimitProfile.build(theta, sigma, coarse).amplitude(), coarse)
    ref = seminorm1(g_inf, spec)
    dist, rel, inc, inc_err = [], [], [], []
    prev = prev_c = None
    rep = ConvergenceReport(r_grid, list(map(float, t_grid)), dist, rel, inc, inc_err)
    for r in r_grid:
        cfg = ChargeConfig(theta, sigma, r)
        dip = DipoleFn(cfg)
        g = transversal_project(dip, spec)
        d = seminorm1(g - g_inf, spec)
        dist.append(d)
        rel.append(d / ref)
        gc = transversal_project(dip, coarse)
        rep.seminorm1_error.append(abs(d - seminorm1(gc - g_inf_c, coarse)))
        if prev is not None:
            a = seminorm0(g - prev, spec)
            b = seminorm0(gc - prev_c, coarse)
            inc.append(a)
            inc_err.append(abs(a - b))
        prev, prev_c = g, gc
        if probe is not None:
            val = finite_r_functional(cfg, probe, spec)
            rep.finite_r_functional.append(val)
            rep.functional_error.append(abs(val - finite_r_functional(cfg, probe, coarse)))
        if measurement is not None:
            rep.gauss_readouts.append(gauss_readout(dip, measurement, spec))
        if energies:
            ts = list(t_grid) or [0.0]
            rep.energy_I.append([energy_shift_I(dip, t, spec)[1] for t in ts])
            rep.energy_II.append([energy_shift_II(dip, t, spec) for t in ts])
        for t in t_grid:
            if t > 0:
                ang, res = cocycle_diag(theta, sigma, r, t, spec)
                rep.cocycle_angle.append([r, float(t), ang])
                rep.cocycle_residual0.append([r, float(t), res])
    if probe is not None:
        rep.limit_value = limit_functional(theta, sigma, probe, spec)
        rep.limit_error = abs(rep.limit_value - limit_functional(theta, sigma, probe, coarse))
        rep.richardson = richardson(rep.finite_r_functional)
    return rep
