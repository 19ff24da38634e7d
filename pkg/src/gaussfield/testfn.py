"""Test functions on Minkowski space built from separable bump atoms.

An atom is ``coef * prod_mu F_mu(x_mu)`` where each axis factor is either

* a bump factor ``u^eps (1-u^2)^(-j) b(u)`` with ``u = (y-c)/w``, or
* a plateau factor ``(1_[-L,L] * beta_w)(y-c)``, a smoothed indicator equal
  to 1 on ``[c-L+w, c+L-w]`` and 0 outside ``[c-L-w, c+L+w]``.

Both families are closed under differentiation, which keeps every
derivative, co-derivative and d'Alembertian an exact atom list.  Vector
functions store covariant components ``g_mu`` with metric (+,-,-,-).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from math import comb
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .quadrature import bump_integral, smooth_step, tanh_nodes, transform

METRIC = np.array([1.0, -1.0, -1.0, -1.0])
RANKS = {"scalar": 1, "vector": 4, "form2": 6}
# lower-index pairs (mu, nu), mu < nu, for 2-form components
FORM2_INDEX = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
_PAIR = {pair: i for i, pair in enumerate(FORM2_INDEX)}


class Point4(NamedTuple):
    x0: float
    x1: float
    x2: float
    x3: float


@dataclass(frozen=True)
class BumpAtom:
    """One separable atom.  ``plateau[mu] > 0`` switches axis ``mu`` to a
    plateau factor of half-length ``plateau[mu]``; ``pole`` holds the
    exponents of ``(1-u^2)^(-1)`` (negative values are polynomial factors)."""

    coefficient: float
    center: Sequence[float]
    widths: Sequence[float]
    monomial: Sequence[int] = (0, 0, 0, 0)
    pole: Sequence[int] = (0, 0, 0, 0)
    plateau: Sequence[float] = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        if len(self.center) != 4 or len(self.widths) != 4:
            raise ValueError("atoms need 4 centers and 4 widths")
        if any(w <= 0 for w in self.widths):
            raise ValueError("atom widths must be positive")
        if any(k < 0 for k in self.monomial):
            raise ValueError("monomial exponents must be non-negative")


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray


@dataclass(frozen=True)
class SupportRegion:
    boxes: tuple

    @property
    def empty(self) -> bool:
        return len(self.boxes) == 0

    def bounding_box(self) -> Box:
        if self.empty:
            return Box(np.zeros(4), np.zeros(4))
        lo = np.min([b.lo for b in self.boxes], axis=0)
        hi = np.max([b.hi for b in self.boxes], axis=0)
        return Box(lo, hi)

    def union(self, other: "SupportRegion") -> "SupportRegion":
        return SupportRegion(self.boxes + other.boxes)

    def contains_point(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return any(np.all(x >= b.lo) and np.all(x <= b.hi) for b in self.boxes)


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TestFn:
    """Immutable finite sum of atoms with a component index each."""

    __test__ = False  # keep pytest from collecting this class

    rank: str
    coef: np.ndarray
    comp: np.ndarray
    center: np.ndarray
    width: np.ndarray
    mono: np.ndarray
    pole: np.ndarray
    plateau: np.ndarray
    _digest: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        if self.rank not in RANKS:
            raise ValueError(f"unknown rank {self.rank!r}")

    # construction ------------------------------------------------------
    @classmethod
    def zero(cls, rank: str = "scalar") -> "TestFn":
        z = np.zeros((0, 4))
        return cls._raw(rank, np.zeros(0), np.zeros(0, int), z, z, z.astype(int), z.astype(int), z)

    @classmethod
    def _raw(cls, rank, coef, comp, center, width, mono, pole, plateau) -> "TestFn":
        return cls(rank, _readonly(np.asarray(coef, float)), _readonly(np.asarray(comp, int)),
                   _readonly(np.asarray(center, float).reshape(-1, 4)),
                   _readonly(np.asarray(width, float).reshape(-1, 4)),
                   _readonly(np.asarray(mono, int).reshape(-1, 4)),
                   _readonly(np.asarray(pole, int).reshape(-1, 4)),
                   _readonly(np.asarray(plateau, float).reshape(-1, 4)))

    @classmethod
    def from_atoms(cls, rank: str, atoms: Iterable[tuple[int, BumpAtom]]) -> "TestFn":
        rows = []
        for comp, a in atoms:
            if not 0 <= comp < RANKS[rank]:
                raise ValueError(f"component {comp} out of range for rank {rank}")
            rows.append((a.coefficient, comp, a.center, a.widths, a.monomial, a.pole, a.plateau))
        if not rows:
            return cls.zero(rank)
        coef, comp, center, width, mono, pole, plat = zip(*rows)
        return cls._raw(rank, coef, comp, center, width, mono, pole, plat).canonical()

    @classmethod
    def scalar_atom(cls, center, widths, coefficient=1.0, monomial=(0, 0, 0, 0)) -> "TestFn":
        return cls.from_atoms("scalar", [(0, BumpAtom(coefficient, tuple(center), tuple(widths), tuple(monomial)))])

    @classmethod
    def vector(cls, components: Sequence["TestFn"]) -> "TestFn":
        """Assemble a covariant vector from 4 scalar functions."""
        return cls.assemble("vector", components)

    @classmethod
    def assemble(cls, rank: str, components: Sequence["TestFn"]) -> "TestFn":
        if len(components) != RANKS[rank]:
            raise ValueError(f"rank {rank} needs {RANKS[rank]} components")
        parts = []
        for i, c in enumerate(components):
            if c.rank != "scalar":
                raise ValueError("components must be scalar")
            parts.append(c._with_comp(np.full(c.n_atoms, i)))
        return cls._concat(rank, parts)

    # basic properties --------------------------------------------------
    @property
    def n_atoms(self) -> int:
        return self.coef.shape[0]

    @property
    def ncomp(self) -> int:
        return RANKS[self.rank]

    @property
    def is_zero(self) -> bool:
        return self.n_atoms == 0

    def atoms(self) -> list[tuple[int, BumpAtom]]:
        return [(int(self.comp[i]), BumpAtom(float(self.coef[i]), tuple(self.center[i]),
                                             tuple(self.width[i]), tuple(int(v) for v in self.mono[i]),
                                             tuple(int(v) for v in self.pole[i]), tuple(self.plateau[i])))
                for i in range(self.n_atoms)]

    def component(self, i: int) -> "TestFn":
        m = self.comp == i
        return TestFn._raw("scalar", self.coef[m], np.zeros(int(m.sum()), int), self.center[m],
                           self.width[m], self.mono[m], self.pole[m], self.plateau[m])

    def components(self) -> list["TestFn"]:
        return [self.component(i) for i in range(self.ncomp)]

    def digest(self) -> str:
        """Content hash; equal atom lists give equal digests."""
        if not self._digest:
            h = hashlib.sha1(self.rank.encode())
            for a in (self.coef, self.comp, self.center, self.width, self.mono, self.pole, self.plateau):
                h.update(np.ascontiguousarray(a).tobytes())
            self._digest.append(h.hexdigest())
        return self._digest[0]

    def __hash__(self):
        return hash(self.digest())

    def __eq__(self, other):
        return isinstance(other, TestFn) and self.digest() == other.digest()

    def __repr__(self):
        return f"TestFn(rank={self.rank!r}, atoms={self.n_atoms}, digest={self.digest()[:10]})"

    # linear structure --------------------------------------------------
    def _with_comp(self, comp) -> "TestFn":
        return TestFn._raw("scalar", self.coef, comp, self.center, self.width, self.mono,
                           self.pole, self.plateau)

    def _with_coef(self, coef) -> "TestFn":
        return TestFn._raw(self.rank, coef, self.comp, self.center, self.width, self.mono,
                           self.pole, self.plateau)

    @staticmethod
    def _concat(rank, parts: Sequence["TestFn"], canonical: bool = True) -> "TestFn":
        parts = [p for p in parts if p.n_atoms]
        if not parts:
            return TestFn.zero(rank)
        out = TestFn._raw(rank, *(np.concatenate([getattr(p, a) for p in parts])
                                  for a in ("coef", "comp", "center", "width", "mono", "pole", "plateau")))
        return out.canonical() if canonical else out

    def __add__(self, other: "TestFn") -> "TestFn":
        if not isinstance(other, TestFn):
            return NotImplemented
        if other.rank != self.rank:
            raise ValueError(f"cannot add {self.rank} and {other.rank}")
        return TestFn._concat(self.rank, [self, other])

    def __neg__(self) -> "TestFn":
        return self._with_coef(-self.coef)

    def __sub__(self, other: "TestFn") -> "TestFn":
        return self + (-other)

    def __mul__(self, a: float) -> "TestFn":
        a = float(a)
        if a == 0.0:
            return TestFn.zero(self.rank)
        return self._with_coef(self.coef * a)

    __rmul__ = __mul__

    def canonical(self) -> "TestFn":
        """Reduce monomials to degree 0/1 via u^2 = 1 - q, merge equal atoms,
        drop zero coefficients.  Atom order is deterministic."""
        if self.n_atoms == 0:
            return self
        coef, comp, center, width, mono, pole, plat = _reduce_monomials(self)
        key = np.concatenate([comp[:, None].astype(float), center, width, mono.astype(float),
                              pole.astype(float), plat], axis=1)
        uniq, inv = np.unique(key, axis=0, return_inverse=True)
        inv = inv.ravel()
        summed = np.zeros(len(uniq))
        np.add.at(summed, inv, coef)
        scale = np.max(np.abs(coef)) if coef.size else 0.0
        keep = np.abs(summed) > 1e-15 * scale
        u = uniq[keep]
        return TestFn._raw(self.rank, summed[keep], u[:, 0].astype(int), u[:, 1:5], u[:, 5:9],
                           u[:, 9:13].astype(int), u[:, 13:17].astype(int), u[:, 17:21])

    # geometry ----------------------------------------------------------
    def half_extent(self) -> np.ndarray:
        return np.where(self.plateau > 0, self.plateau + self.width, self.width)

    def support(self) -> SupportRegion:
        he = self.half_extent()
        return SupportRegion(tuple(Box(self.center[i] - he[i], self.center[i] + he[i])
                                   for i in range(self.n_atoms)))

    def min_width(self) -> float:
        return float(self.width.min()) if self.n_atoms else np.inf

    def translate(self, a) -> "TestFn":
        a = np.asarray(a, dtype=float).reshape(4)
        return TestFn._raw(self.rank, self.coef, self.comp, self.center + a, self.width,
                           self.mono, self.pole, self.plateau)

    def scale(self, r: float) -> "TestFn":
        """``x -> r^-4 f(x/r)``."""
        if r <= 0:
            raise ValueError("scale factor must be positive")
        return TestFn._raw(self.rank, self.coef * r ** -4, self.comp, self.center * r,
                           self.width * r, self.mono, self.pole, self.plateau * r)

    # evaluation --------------------------------------------------------
    def evaluate(self, x) -> np.ndarray:
        """Values at points ``x`` of shape (4,) or (M, 4); returns (ncomp,) or (M, ncomp)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = x.reshape(-1, 4)
        out = np.zeros((x.shape[0], self.ncomp))
        for i in range(self.n_atoms):
            val = np.full(x.shape[0], self.coef[i])
            for mu in range(4):
                val *= factor_value(x[:, mu], self.center[i, mu], self.width[i, mu], self.mono[i, mu],
                                    self.pole[i, mu], self.plateau[i, mu])
            out[:, self.comp[i]] += val
        return out[0] if single else out

    __call__ = evaluate

    def integral(self) -> np.ndarray:
        """Spacetime integral of each component."""
        out = np.zeros(self.ncomp)
        for i in range(self.n_atoms):
            v = self.coef[i]
            for mu in range(4):
                v *= factor_integral(self.width[i, mu], self.mono[i, mu], self.pole[i, mu], self.plateau[i, mu])
            out[self.comp[i]] += v
        return out

    def fourier(self, p) -> np.ndarray:
        """``(2 pi)^-2 int d^4x exp(i(p0 x0 - p.x)) f(x)`` at momenta ``p`` (M, 4)."""
        p = np.asarray(p, dtype=float)
        single = p.ndim == 1
        p = p.reshape(-1, 4)
        k = p * METRIC  # axis wavenumbers
        out = np.zeros((p.shape[0], self.ncomp), dtype=complex)
        for i in range(self.n_atoms):
            val = np.full(p.shape[0], self.coef[i] / (2 * np.pi) ** 2, dtype=complex)
            for mu in range(4):
                val *= factor_ft(k[:, mu], self.center[i, mu], self.width[i, mu], self.mono[i, mu],
                                 self.pole[i, mu], self.plateau[i, mu])
            out[:, self.comp[i]] += val
        return out[0] if single else out

    # serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        atoms = []
        for i in range(self.n_atoms):
            a = {"coef": float(self.coef[i]), "component": int(self.comp[i]),
                 "center": [float(v) for v in self.center[i]],
                 "widths": [float(v) for v in self.width[i]],
                 "monomial": [int(v) for v in self.mono[i]]}
            if np.any(self.pole[i]):
                a["pole"] = [int(v) for v in self.pole[i]]
            if np.any(self.plateau[i]):
                a["plateau"] = [float(v) for v in self.plateau[i]]
            atoms.append(a)
        return {"rank": self.rank, "atoms": atoms}

    @classmethod
    def from_dict(cls, doc: dict) -> "TestFn":
        try:
            rank = doc["rank"]
            atoms = [(int(a.get("component", 0)),
                      BumpAtom(float(a["coef"]), tuple(float(v) for v in a["center"]),
                               tuple(float(v) for v in a["widths"]),
                               tuple(int(v) for v in a.get("monomial", (0, 0, 0, 0))),
                               tuple(int(v) for v in a.get("pole", (0, 0, 0, 0))),
                               tuple(float(v) for v in a.get("plateau", (0.0, 0.0, 0.0, 0.0)))))
                     for a in doc.get("atoms", [])]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed test function document: {exc}") from exc
        return cls.from_atoms(rank, atoms)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TestFn":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# axis factors

def factor_value(y, c, w, eps, j, plateau):
    y = np.asarray(y, dtype=float)
    if plateau > 0:
        return smooth_step((y - c + plateau) / w) - smooth_step((y - c - plateau) / w)
    u = (y - c) / w
    out = np.zeros_like(u)
    m = np.abs(u) < 1.0
    um = u[m]
    q = 1.0 - um * um
    out[m] = um ** eps * np.exp(-1.0 / q - j * np.log(q))
    return out


def factor_ft(k, c, w, eps, j, plateau):
    """``int dy exp(i k y) F(y)``."""
    k = np.asarray(k, dtype=float)
    phase = np.exp(1j * k * c)
    if plateau > 0:
        kl = k * plateau
        with np.errstate(invalid="ignore", divide="ignore"):
            box = np.where(np.abs(kl) > 1e-8, 2.0 * np.sin(kl) / np.where(k == 0, 1.0, k),
                           2.0 * plateau * (1.0 - kl * kl / 6.0))
        return phase * box * transform(0, 0).real_part(k * w) / bump_integral()
    tr = transform(eps, j)
    val = w * tr.real_part(k * w)
    return phase * (1j * val if eps == 1 else val)


def factor_integral(w, eps, j, plateau) -> float:
    if plateau > 0:
        return 2.0 * plateau
    if eps == 1:
        return 0.0
    return float(w * transform(0, j).real_part(np.zeros(1))[0])


def factor_interval(c, w, plateau):
    he = plateau + w if plateau > 0 else w
    return c - he, c + he


def factor_overlap(fa: tuple, fb: tuple, n: int = 257) -> float:
    """``int F_a F_b dy`` for two axis factors ``(c, w, eps, j, plateau)``."""
    lo_a, hi_a = factor_interval(fa[0], fa[1], fa[4])
    lo_b, hi_b = factor_interval(fb[0], fb[1], fb[4])
    lo, hi = max(lo_a, lo_b), min(hi_a, hi_b)
    if hi <= lo:
        return 0.0
    u, w, _ = tanh_nodes(n)
    half = 0.5 * (hi - lo)
    y = 0.5 * (lo + hi) + half * u
    return float(half * np.sum(w * factor_value(y, *fa) * factor_value(y, *fb)))


def _reduce_monomials(f: TestFn):
    """Rewrite u^k q^-j with k >= 2 as u^(k mod 2) * (1-q)^(k//2) q^-j."""
    coef, comp, center, width = f.coef, f.comp, f.center, f.width
    mono, pole, plat = f.mono, f.pole, f.plateau
    if np.all(mono < 2):
        return coef, comp, center, width, mono, pole, plat
    rows = [[] for _ in range(7)]
    for i in range(f.n_atoms):
        terms = [(coef[i], mono[i].copy(), pole[i].copy())]
        for mu in range(4):
            new = []
            for c0, mo, po in terms:
                k = mo[mu]
                if k < 2:
                    new.append((c0, mo, po))
                    continue
                a = k // 2
                for t in range(a + 1):
                    mo2, po2 = mo.copy(), po.copy()
                    mo2[mu] = k % 2
                    po2[mu] = po[mu] - t
                    new.append((c0 * comb(a, t) * (-1) ** t, mo2, po2))
            terms = new
        for c0, mo, po in terms:
            for lst, v in zip(rows, (c0, comp[i], center[i], width[i], mo, po, plat[i])):
                lst.append(v)
    return tuple(np.array(r) for r in rows)


# ---------------------------------------------------------------------------
# calculus

def _d_axis(f: TestFn, mu: int) -> TestFn:
    """Partial derivative along axis ``mu`` (returns same rank)."""
    if f.n_atoms == 0:
        return f
    rows = {a: [] for a in ("coef", "comp", "center", "width", "mono", "pole", "plateau")}

    def push(c0, i, center=None, mono=None, pole=None, plateau=None):
        rows["coef"].append(c0)
        rows["comp"].append(f.comp[i])
        rows["center"].append(f.center[i] if center is None else center)
        rows["width"].append(f.width[i])
        rows["mono"].append(f.mono[i] if mono is None else mono)
        rows["pole"].append(f.pole[i] if pole is None else pole)
        rows["plateau"].append(f.plateau[i] if plateau is None else plateau)

    zinv = 1.0 / bump_integral()
    for i in range(f.n_atoms):
        w = f.width[i, mu]
        eps, j = int(f.mono[i, mu]), int(f.pole[i, mu])
        if f.plateau[i, mu] > 0:
            L = f.plateau[i, mu]
            for shift, sign in ((-L, 1.0), (L, -1.0)):
                cen = f.center[i].copy()
                cen[mu] += shift
                pl = f.plateau[i].copy()
                pl[mu] = 0.0
                mo, po = f.mono[i].copy(), f.pole[i].copy()
                mo[mu], po[mu] = 0, 0
                push(sign * f.coef[i] * zinv / w, i, center=cen, mono=mo, pole=po, plateau=pl)
            continue
        base = f.coef[i] / w
        for ce, de, dj in ((eps, -1, 0), (2.0 * j, 1, 1), (-2.0, 1, 2)):
            if ce == 0:
                continue
            mo, po = f.mono[i].copy(), f.pole[i].copy()
            mo[mu] = eps + de
            po[mu] = j + dj
            push(base * ce, i, mono=mo, pole=po)
    if not rows["coef"]:
        return TestFn.zero(f.rank)
    return TestFn._raw(f.rank, *(np.array(rows[a]) for a in
                                 ("coef", "comp", "center", "width", "mono", "pole", "plateau"))).canonical()


def partial(f: TestFn, mu: int) -> TestFn:
    return _d_axis(f, mu)


def box(f: TestFn) -> TestFn:
    """d'Alembertian ``d0^2 - Laplacian`` applied componentwise."""
    parts = [_d_axis(_d_axis(f, 0), 0)]
    for i in (1, 2, 3):
        parts.append(-_d_axis(_d_axis(f, i), i))
    return TestFn._concat(f.rank, parts)


def gradient(s: TestFn) -> TestFn:
    """Exterior derivative of a scalar: ``(ds)_mu = d_mu s``."""
    if s.rank != "scalar":
        raise ValueError("gradient needs a scalar function")
    return TestFn.vector([_d_axis(s, mu) for mu in range(4)])


def exterior_derivative(h: TestFn) -> TestFn:
    """``(dh)_{mu nu} = d_mu h_nu - d_nu h_mu`` for a vector ``h``."""
    if h.rank != "vector":
        raise ValueError("exterior_derivative needs a vector function")
    comps = h.components()
    out = []
    for mu, nu in FORM2_INDEX:
        out.append(_d_axis(comps[nu], mu) - _d_axis(comps[mu], nu))
    return TestFn.assemble("form2", out)


def coderivative1(g: TestFn) -> TestFn:
    """``delta g = d^mu g_mu = d0 g_0 - div g``; fixes ``delta(ds) = box s``."""
    if g.rank != "vector":
        raise ValueError("coderivative1 needs a vector function")
    comps = g.components()
    parts = [_d_axis(comps[0], 0)] + [-_d_axis(comps[i], i) for i in (1, 2, 3)]
    return TestFn._concat("scalar", parts)


def form2_component(F: TestFn, mu: int, nu: int) -> TestFn:
    if mu == nu:
        return TestFn.zero("scalar")
    if mu < nu:
        return F.component(_PAIR[(mu, nu)])
    return -F.component(_PAIR[(nu, mu)])


def coderivative2(F: TestFn) -> TestFn:
    """``(delta F)_nu = d^mu F_{nu mu}``; gives ``(tau Lap chi, tau' grad chi)``
    for ``F = dh`` with ``h = (tau chi, 0)``."""
    if F.rank != "form2":
        raise ValueError("coderivative2 needs a 2-form")
    out = []
    for nu in range(4):
        parts = [METRIC[mu] * _d_axis(form2_component(F, nu, mu), mu) for mu in range(4) if mu != nu]
        out.append(TestFn._concat("scalar", parts))
    return TestFn.vector(out)


def delta_d(h: TestFn) -> TestFn:
    return coderivative2(exterior_derivative(h))


def inner_l2(f: TestFn, g: TestFn) -> float:
    """``sum_c int f_c g_c d^4x`` (Euclidean, exact up to 1-D quadrature)."""
    if f.rank != g.rank:
        raise ValueError("rank mismatch")
    total = 0.0
    cache: dict = {}
    for i in range(f.n_atoms):
        for k in range(g.n_atoms):
            if f.comp[i] != g.comp[k]:
                continue
            v = f.coef[i] * g.coef[k]
            for mu in range(4):
                fa = (f.center[i, mu], f.width[i, mu], f.mono[i, mu], f.pole[i, mu], f.plateau[i, mu])
                fb = (g.center[k, mu], g.width[k, mu], g.mono[k, mu], g.pole[k, mu], g.plateau[k, mu])
                key = (fa, fb)
                ov = cache.get(key)
                if ov is None:
                    ov = cache[key] = factor_overlap(fa, fb)
                v *= ov
                if v == 0.0:
                    break
            total += v
    return float(total)


def l2_norm(f: TestFn) -> float:
    return float(np.sqrt(max(inner_l2(f, f), 0.0)))


def pair_integral(s: TestFn, rho: TestFn) -> float:
    """``int s(x) rho(x) dx`` for scalars."""
    return inner_l2(s, rho)


def translate(f: TestFn, a) -> TestFn:
    return f.translate(a)


def scale_profile(sigma: TestFn, r: float) -> TestFn:
    """``sigma_r(x) = r^-4 sigma(x/r)``; preserves the integral."""
    return sigma.scale(r)


def evaluate(f: TestFn, x) -> np.ndarray:
    return f.evaluate(x)


def fourier(f: TestFn, p) -> np.ndarray:
    return f.fourier(p)


d0 = gradient
d1 = exterior_derivative


def _box_pair_spacelike(a: Box, b: Box) -> bool:
    dt = max(abs(a.hi[0] - b.lo[0]), abs(b.hi[0] - a.lo[0]))
    gap = np.maximum(0.0, np.maximum(b.lo[1:] - a.hi[1:], a.lo[1:] - b.hi[1:]))
    return bool(dt < np.sqrt(np.sum(gap * gap)))


def spacelike_separated(r1, r2) -> bool:
    """Conservative certificate that every pair of points is spacelike.

    Accepts :class:`SupportRegion` or :class:`TestFn` arguments.  Each box
    pair must satisfy ``sup|dt| < inf|dx|``; empty regions are trivially
    separated.
    """
    r1 = r1.support() if isinstance(r1, TestFn) else r1
    r2 = r2.support() if isinstance(r2, TestFn) else r2
    return all(_box_pair_spacelike(a, b) for a in r1.boxes for b in r2.boxes)


def coordinate_multiply(f: TestFn, mu: int) -> TestFn:
    """``x -> x^mu f(x)`` (contravariant coordinate; plateau axes excluded)."""
    if np.any(f.plateau[:, mu] > 0):
        raise ValueError("cannot multiply a plateau factor by its coordinate")
    mono = f.mono.copy()
    mono[:, mu] += 1
    shifted = TestFn._raw(f.rank, f.coef * f.width[:, mu], f.comp, f.center, f.width, mono,
                          f.pole, f.plateau)
    base = f._with_coef(f.coef * f.center[:, mu])
    return TestFn._concat(f.rank, [base, shifted])


def convolve_at(f: TestFn, g: TestFn, x, n: int = 129) -> np.ndarray:
    """``(f * g)(x) = int f(x - c) g(c) dc`` for scalars at points ``x`` (M, 4)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.zeros(x.shape[0])
    u, w, _ = tanh_nodes(n)
    for i in range(f.n_atoms):
        for k in range(g.n_atoms):
            val = np.full(x.shape[0], f.coef[i] * g.coef[k])
            for mu in range(4):
                fa = (f.center[i, mu], f.width[i, mu], f.mono[i, mu], f.pole[i, mu], f.plateau[i, mu])
                fb = (g.center[k, mu], g.width[k, mu], g.mono[k, mu], g.pole[k, mu], g.plateau[k, mu])
                lo_a, hi_a = factor_interval(fa[0], fa[1], fa[4])
                lo_b, hi_b = factor_interval(fb[0], fb[1], fb[4])
                # c in supp g and x - c in supp f
                lo = np.maximum(lo_b, x[:, mu] - hi_a)
                hi = np.minimum(hi_b, x[:, mu] - lo_a)
                half = np.maximum(0.5 * (hi - lo), 0.0)
                c = 0.5 * (lo + hi)[:, None] + half[:, None] * u[None, :]
                vals = factor_value(x[:, mu][:, None] - c, *fa) * factor_value(c, *fb)
                val *= half * (vals @ w)
            out += val
    return out
