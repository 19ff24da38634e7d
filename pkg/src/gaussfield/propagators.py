"""Pauli-Jordan pairings evaluated on the positive zero-mass shell.

Conventions (metric +,-,-,-; ``f~(p) = (2pi)^-2 int exp(i(p0 x0 - p.x)) f``):

* ``D_+(x) = (2pi)^-3 int d^3p/(2|p|) exp(-i p x)``, so
  ``<f, D_+ g> = C_D int d^3p/(2|p|) conj(f~_mu(p)) g~^mu(p)`` on the shell
  with ``C_D = 2 pi``;
* ``<f, D g> = 2 Im <f, D_+ g>``, i.e. ``D = -i(D_+(x) - D_+(-x))`` with
  ``D(0, x) = 0`` and ``d0 D(0, x) = -delta^3(x)``.  This is the sign for
  which a charge enclosed by a measurement region reads out positively.

Shell integrals use a product grid: Gauss-Legendre in ``|p|`` on
``[0, p_max]``, Gauss-Legendre in ``cos(theta)`` and the trapezoid rule in
``phi``.  The grid is fixed per :class:`QuadratureSpec`, so every pairing
is an exactly bilinear (and, for ``D``, exactly antisymmetric) finite sum.
"""
from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import asdict, dataclass, replace
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

from .quadrature import bump_integral, transform
from .testfn import METRIC, RANKS, TestFn

C_D = 2.0 * np.pi


@dataclass(frozen=True)
class QuadratureSpec:
    """Orders and cutoffs for shell and light-cone quadrature."""

    p_max: float = 40.0
    n_radial: int = 96
    n_polar: int = 64
    n_azimuth: int = 32
    rtol: float = 1e-8
    # position-space (light-cone) orders
    lc_radial: int = 96
    lc_polar: int = 48
    lc_azimuth: int = 48
    # composite radial rule: ``radial_panels`` equal panels of ``n_radial``
    # nodes each, the first split ``ir_levels`` times geometrically towards 0
    radial_panels: int = 1
    ir_levels: int = 0

    def __post_init__(self):
        if self.p_max <= 0:
            raise ValueError("p_max must be positive")
        for name in ("n_radial", "n_polar", "n_azimuth", "lc_radial", "lc_polar", "lc_azimuth"):
            if getattr(self, name) < 2:
                raise ValueError(f"{name} must be at least 2")
        if self.n_azimuth % 2:
            raise ValueError("n_azimuth must be even (the grid is closed under p -> -p)")
        if self.radial_panels < 1 or self.ir_levels < 0:
            raise ValueError("radial_panels must be >= 1 and ir_levels >= 0")

    def coarse(self) -> "QuadratureSpec":
        """Reduced orders used for the refinement-delta error estimate."""
        def c(n):
            return max(2, int(round(0.75 * n)))
        return replace(self, n_radial=c(self.n_radial), n_polar=c(self.n_polar),
                       n_azimuth=2 * c(self.n_azimuth // 2), lc_radial=c(self.lc_radial),
                       lc_polar=c(self.lc_polar), lc_azimuth=c(self.lc_azimuth))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "QuadratureSpec":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown quadrature fields: {sorted(unknown)}")
        types = {k: type(getattr(cls(), k)) for k in cls.__dataclass_fields__}
        return cls(**{k: types[k](v) for k, v in doc.items()})


_DEFAULT = [QuadratureSpec()]


def default_spec() -> QuadratureSpec:
    return _DEFAULT[0]


def set_default_spec(spec: QuadratureSpec) -> None:
    _DEFAULT[0] = spec


class _LRU:
    """Byte-bounded LRU cache shared between threads."""

    def __init__(self, max_bytes: int):
        self.max_bytes = max_bytes
        self._data: OrderedDict = OrderedDict()
        self._bytes = 0
        self._lock = threading.Lock()

    def get(self, key):
        with self._lock:
            v = self._data.get(key)
            if v is not None:
                self._data.move_to_end(key)
            return v

    def put(self, key, value, nbytes: int):
        with self._lock:
            if key in self._data:
                return self._data[key]
            self._data[key] = (value, nbytes)
            self._bytes += nbytes
            while self._bytes > self.max_bytes and len(self._data) > 1:
                _, (_, nb) = self._data.popitem(last=False)
                self._bytes -= nb
            return self._data[key]

    def clear(self):
        with self._lock:
            self._data.clear()
            self._bytes = 0


# one byte budget for the whole process, shared by every grid; keys carry the spec
_FACTORS = _LRU(512 << 20)
_AMPS = _LRU(1024 << 20)


def radial_rule(spec: QuadratureSpec):
    """Gauss-Legendre nodes and weights for ``|p|`` in ``[0, p_max]``."""
    edges = np.linspace(0.0, spec.p_max, spec.radial_panels + 1)
    first = edges[1]
    ir = [first * 2.0 ** -k for k in range(spec.ir_levels, 0, -1)]
    edges = np.concatenate([[0.0], ir, edges[1:]])
    x, w = leggauss(spec.n_radial)
    p = np.concatenate([0.5 * (b - a) * (x + 1.0) + a for a, b in zip(edges[:-1], edges[1:])])
    wp = np.concatenate([0.5 * (b - a) * w for a, b in zip(edges[:-1], edges[1:])])
    return p, wp


class ShellGrid:
    """Nodes and weights of the shell product rule for one spec."""

    def __init__(self, spec: QuadratureSpec):
        self.spec = spec
        self.p, self.w_p = radial_rule(spec)
        self.cos_t, self.w_t = leggauss(spec.n_polar)
        self.sin_t = np.sqrt(1.0 - self.cos_t ** 2)
        self.phi = 2.0 * np.pi * np.arange(spec.n_azimuth) / spec.n_azimuth
        self.w_phi = 2.0 * np.pi / spec.n_azimuth
        self.shape = (self.p.size, spec.n_polar, spec.n_azimuth)
        P = self.p[:, None, None]
        ct = self.cos_t[None, :, None]
        st = self.sin_t[None, :, None]
        cp = np.cos(self.phi)[None, None, :]
        sp = np.sin(self.phi)[None, None, :]
        # momentum components p^mu on the shell (broadcastable)
        self.pvec = [P, P * st * cp, P * st * sp, P * ct]
        # axis wave numbers k_mu = p_mu (lowered) used by atom transforms
        self.k = [P, -P * st * cp, -P * st * sp, -P * ct]
        # d^3p / (2|p|) = |p|/2 dp dcos dphi
        self.measure = np.ascontiguousarray(
            np.broadcast_to(0.5 * (self.p * self.w_p)[:, None, None]
                            * self.w_t[None, :, None] * self.w_phi, self.shape)).ravel()
        self._factors = _FACTORS
        self._amps = _AMPS

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def momenta(self) -> np.ndarray:
        """On-shell momenta ``(|p|, p)`` as an (N, 4) array."""
        return np.stack([np.broadcast_to(c, self.shape).ravel() for c in self.pvec], axis=1)

    def reflect(self, values: np.ndarray) -> np.ndarray:
        """Values at ``-p`` (last three axes are the grid axes)."""
        half = self.spec.n_azimuth // 2
        return np.roll(values[..., ::-1, :], -half, axis=-1)

    def unit_p(self):
        """Unit spatial direction components (broadcastable)."""
        ct = self.cos_t[None, :, None]
        st = self.sin_t[None, :, None]
        return [st * np.cos(self.phi)[None, None, :], st * np.sin(self.phi)[None, None, :],
                ct * np.ones((1, 1, 1))]

    # atom factor tables -------------------------------------------------
    def _real_factor(self, mu, w, eps, j, plateau):
        key = ("R", self.spec, mu, w, eps, j, plateau)
        hit = self._factors.get(key)
        if hit is not None:
            return hit[0]
        k = self.k[mu]
        if plateau > 0:
            kl = k * plateau
            safe = np.where(np.abs(kl) > 1e-8, k, 1.0)
            box = np.where(np.abs(kl) > 1e-8, 2.0 * np.sin(kl) / safe, 2.0 * plateau * (1.0 - kl * kl / 6.0))
            val = box * transform(0, 0).real_part(k * w) / bump_integral()
        else:
            val = w * transform(eps, j).real_part(k * w)
        val.setflags(write=False)
        return self._factors.put(key, val, val.nbytes)[0]

    def _phase(self, mu, c):
        key = ("E", self.spec, mu, c)
        hit = self._factors.get(key)
        if hit is not None:
            return hit[0]
        val = np.exp(1j * self.k[mu] * c)
        val.setflags(write=False)
        return self._factors.put(key, val, val.nbytes)[0]

    def _testfn_values(self, f: TestFn) -> np.ndarray:
        out = np.zeros((f.ncomp,) + self.shape, dtype=complex)
        groups: dict = {}
        for i in range(f.n_atoms):
            groups.setdefault((int(f.comp[i]), tuple(f.center[i])), []).append(i)
        for (comp, cen), idxs in groups.items():
            acc = [None, None, None, None]
            for i in idxs:
                small = f.coef[i] * self._real_factor(0, f.width[i, 0], f.mono[i, 0], f.pole[i, 0], f.plateau[i, 0]) \
                    * self._real_factor(3, f.width[i, 3], f.mono[i, 3], f.pole[i, 3], f.plateau[i, 3])
                prod = small * self._real_factor(1, f.width[i, 1], f.mono[i, 1], f.pole[i, 1], f.plateau[i, 1])
                prod *= self._real_factor(2, f.width[i, 2], f.mono[i, 2], f.pole[i, 2], f.plateau[i, 2])
                pw = int(np.sum(f.mono[i])) % 4
                if acc[pw] is None:
                    acc[pw] = prod
                else:
                    acc[pw] += prod
            zero = np.zeros(self.shape)
            re = (acc[0] if acc[0] is not None else zero) - (acc[2] if acc[2] is not None else zero)
            im = (acc[1] if acc[1] is not None else zero) - (acc[3] if acc[3] is not None else zero)
            ph = self._phase(0, cen[0]) * self._phase(3, cen[3])
            if cen[1] != 0.0:
                ph = ph * self._phase(1, cen[1])
            if cen[2] != 0.0:
                ph = ph * self._phase(2, cen[2])
            out[comp] += ph * (re + 1j * im)
        out *= (2.0 * np.pi) ** -2
        return out

    def amplitude(self, f) -> "MassShellAmplitude":
        """Shell restriction of a TestFn or of any object exposing
        ``shell_values(grid)`` and ``digest()``."""
        if isinstance(f, MassShellAmplitude):
            if f.grid is not self:
                raise ValueError("amplitude belongs to a different grid")
            return f
        key = (self.spec, f.digest())
        hit = self._amps.get(key)
        if hit is not None:
            return hit[0]
        if isinstance(f, TestFn):
            vals = self._testfn_values(f)
            rank = f.rank
        else:
            vals = np.asarray(f.shell_values(self), dtype=complex)
            rank = getattr(f, "rank", "vector")
        amp = MassShellAmplitude(self, rank, vals)
        return self._amps.put(key, amp, vals.nbytes)[0]

    def clear(self):
        """Drop the cached factor tables and amplitudes (of every grid)."""
        self._factors.clear()
        self._amps.clear()


@lru_cache(maxsize=8)
def _grid_for(spec: QuadratureSpec) -> ShellGrid:
    return ShellGrid(spec)


def get_grid(spec: QuadratureSpec | None = None) -> ShellGrid:
    return _grid_for(spec or default_spec())


class MassShellAmplitude:
    """Covariant-component values ``f~_mu(|p|, p)`` on a shell grid."""

    def __init__(self, grid: ShellGrid, rank: str, values: np.ndarray):
        values = np.asarray(values, dtype=complex)
        if values.shape != (RANKS[rank],) + grid.shape:
            raise ValueError(f"amplitude shape {values.shape} does not match grid {grid.shape}")
        values.setflags(write=False)
        self.grid = grid
        self.rank = rank
        self.values = values

    @property
    def ncomp(self) -> int:
        return self.values.shape[0]

    def _check(self, other: "MassShellAmplitude"):
        if other.grid is not self.grid:
            raise ValueError("amplitudes live on different grids")
        if other.rank != self.rank:
            raise ValueError("rank mismatch")

    def __add__(self, other):
        self._check(other)
        return MassShellAmplitude(self.grid, self.rank, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return MassShellAmplitude(self.grid, self.rank, self.values - other.values)

    def __neg__(self):
        return MassShellAmplitude(self.grid, self.rank, -self.values)

    def __mul__(self, a):
        return MassShellAmplitude(self.grid, self.rank, self.values * a)

    __rmul__ = __mul__

    def translate(self, a) -> "MassShellAmplitude":
        """Amplitude of ``x -> f(x - a)``: factor ``exp(i(p0 a0 - p.a))``."""
        a = np.asarray(a, dtype=float)
        pv = self.grid.pvec
        arg = pv[0] * a[0] - pv[1] * a[1] - pv[2] * a[2] - pv[3] * a[3]
        return MassShellAmplitude(self.grid, self.rank, self.values * np.exp(1j * arg))

    def time_shift(self, t: float) -> "MassShellAmplitude":
        return self.translate([t, 0.0, 0.0, 0.0])

    def raised(self) -> np.ndarray:
        """Contravariant components ``f~^mu``."""
        if self.rank == "scalar":
            return self.values
        return self.values * METRIC[:, None, None, None]

    def digest(self) -> str:  # pragma: no cover - amplitudes are not cached by digest
        raise TypeError("amplitudes are not hashable test functions")


# ---------------------------------------------------------------------------
# pairings

def _weighted(grid: ShellGrid, a: np.ndarray, b: np.ndarray, weight=None) -> complex:
    w = grid.measure if weight is None else grid.measure * np.broadcast_to(weight, grid.shape).ravel()
    return complex(np.sum(w * (np.conj(a.ravel()) * b.ravel())))


def _contract(fa: MassShellAmplitude, ga: MassShellAmplitude, weight=None) -> complex:
    """``int d^3p/(2|p|) conj(f~_mu) g~^mu`` (Minkowski contraction)."""
    if fa.rank != ga.rank:
        raise ValueError(f"rank mismatch: {fa.rank} vs {ga.rank}")
    if fa.rank == "scalar":
        return _weighted(fa.grid, fa.values[0], ga.values[0], weight)
    total = 0j
    for mu in range(4):
        total += METRIC[mu] * _weighted(fa.grid, fa.values[mu], ga.values[mu], weight)
    return total


def _amps(f, g, spec):
    grid = get_grid(spec)
    return grid.amplitude(f), grid.amplitude(g)


def solve_wave(m, spec: QuadratureSpec | None = None) -> MassShellAmplitude:
    """Shell restriction of ``m``, i.e. the data of the solution ``D m``."""
    return get_grid(spec).amplitude(m)


def pair_Dplus(f, g, spec: QuadratureSpec | None = None) -> complex:
    """``<f, D_+ g>`` (vector or scalar arguments, Minkowski contraction)."""
    fa, ga = _amps(f, g, spec)
    return C_D * _contract(fa, ga)


def _im_parts(grid: ShellGrid, a: np.ndarray, b: np.ndarray):
    """``(sum w Re a Im b, sum w Im a Re b)``; swapping ``a`` and ``b``
    swaps the pair bit for bit."""
    w = grid.measure
    ar, ai = a.real.ravel(), a.imag.ravel()
    br, bi = b.real.ravel(), b.imag.ravel()
    return float(np.sum(w * (ar * bi))), float(np.sum(w * (ai * br)))


def pair_D(f, g, spec: QuadratureSpec | None = None) -> float:
    """``<f, D g> = int f_mu(x) D(x-y) g^mu(y)`` (equal to ``2 Im <f, D_+ g>``).

    Evaluated so that ``pair_D(g, f) == -pair_D(f, g)`` holds exactly in
    floating point and ``pair_D(f, f) == 0``.
    """
    fa, ga = _amps(f, g, spec)
    if fa.rank != ga.rank:
        raise ValueError(f"rank mismatch: {fa.rank} vs {ga.rank}")
    x = y = 0.0
    for mu in range(fa.ncomp):
        eta = 1.0 if fa.rank == "scalar" else METRIC[mu]
        px, py = _im_parts(fa.grid, fa.values[mu], ga.values[mu])
        x += eta * px
        y += eta * py
    return 2.0 * C_D * (x - y)


def pair_Ds_rho(s, rho, spec: QuadratureSpec | None = None) -> float:
    """``int (D s)(x) rho(x) dx`` for scalar ``s`` and ``rho``."""
    return pair_D(rho, s, spec)


def seminorm_sq(f, spec: QuadratureSpec | None = None, components=None, weight=None) -> float:
    """``C_D int d^3p/(2|p|) w(p) sum_c |f~_c|^2`` over the chosen components."""
    a = f if isinstance(f, MassShellAmplitude) else get_grid(spec).amplitude(f)
    comps = range(a.ncomp) if components is None else components
    return float(sum(C_D * _weighted(a.grid, a.values[c], a.values[c], weight).real for c in comps))


def norm0(f, spec: QuadratureSpec | None = None) -> float:
    """Euclidean single-particle norm over all components (scale for
    relative tolerances)."""
    return float(np.sqrt(max(seminorm_sq(f, spec), 0.0)))


def tail_bound(f, g, spec: QuadratureSpec | None = None, frac: float = 0.8) -> float:
    """Contribution of ``|p| > frac * p_max`` to ``int |f~||g~|``; a proxy
    for the truncated tail beyond ``p_max`` (atom transforms decay
    monotonically in envelope)."""
    grid = get_grid(spec)
    fa, ga = grid.amplitude(f), grid.amplitude(g)
    mask = np.broadcast_to((grid.p >= frac * grid.spec.p_max)[:, None, None], grid.shape).ravel()
    tot = 0.0
    for c in range(fa.ncomp):
        tot += float(np.sum(grid.measure[mask] * np.abs(fa.values[c].ravel()[mask])
                            * np.abs(ga.values[c].ravel()[mask])))
    return C_D * tot


def with_error(fn, f, g, spec: QuadratureSpec | None = None) -> dict:
    """Evaluate ``fn(f, g, spec)`` with refinement delta and tail bound."""
    spec = spec or default_spec()
    val = fn(f, g, spec)
    coarse = fn(f, g, spec.coarse())
    delta = float(abs(np.asarray(val) - np.asarray(coarse)))
    tail = tail_bound(f, g, spec) if isinstance(f, TestFn) or hasattr(f, "shell_values") else 0.0
    return {"value": val, "refinement_delta": delta, "tail_bound": tail, "error": delta + tail}


def pair_Dflat(rho1: TestFn, rho2: TestFn, spec: QuadratureSpec | None = None) -> float:
    """``<rho1, D_flat rho2>``; see :mod:`gaussfield.lightcone`."""
    from .lightcone import pair_Dflat as _impl
    return _impl(rho1, rho2, spec or default_spec())
