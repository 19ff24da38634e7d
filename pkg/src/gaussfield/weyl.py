"""Words in the generators ``V(g)``, ``W(m)`` and ``psi(rho)``.

Every word reduces to ``e^{i angle} psi(rho) W(m)`` using

* ``W(m1) W(m2) = e^{-(i/2)<m1, D m2>} W(m1 + m2)``,
* ``W(m) psi(rho) = e^{-i<delta m, Dflat rho>} psi(rho) W(m)``,
* ``psi(rho1) psi(rho2) = psi(rho1 + rho2)``,

and ``V(g) = W(g)`` for ``delta g = 0``.  Angles are accumulated as sums
of cached pairings between individual factors.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .propagators import QuadratureSpec, default_spec, pair_D, pair_Dflat, pair_Dplus
from .testfn import TestFn, coderivative1, l2_norm, pair_integral

KINDS = ("V", "W", "Psi")
TOL = 1e-8


class NotGaugeInvariant(ValueError):
    """The word is not in the gauge invariant span (rho != delta m)."""


class NonObservableWord(ValueError):
    """An automorphism defined on V-words was applied to W or psi factors."""


@dataclass(frozen=True)
class Generator:
    kind: str
    arg: TestFn

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        want = "scalar" if self.kind == "Psi" else "vector"
        if self.arg.rank != want:
            raise ValueError(f"{self.kind} needs a {want} argument, got {self.arg.rank}")
        if self.kind == "V":
            res = l2_norm(coderivative1(self.arg))
            if res > TOL * max(1.0, l2_norm(self.arg)):
                raise ValueError(f"V argument is not divergence free (|delta g| = {res:.3g})")

    @property
    def is_field(self) -> bool:
        return self.kind in ("V", "W")

    def inverse(self) -> "Generator":
        inv = object.__new__(Generator)  # -arg inherits the checks of arg
        object.__setattr__(inv, "kind", self.kind)
        object.__setattr__(inv, "arg", -self.arg)
        return inv

    def __repr__(self):
        return f"{self.kind}({self.arg.digest()[:8]})"


def V(g: TestFn) -> Generator:
    return Generator("V", g)


def W(m: TestFn) -> Generator:
    return Generator("W", m)


def Psi(rho: TestFn) -> Generator:
    return Generator("Psi", rho)


@dataclass(frozen=True)
class WeylWord:
    """``e^{i angle} F_1 F_2 ... F_n``."""

    factors: tuple = ()
    angle: float = 0.0

    @classmethod
    def of(cls, *gens: Generator, angle: float = 0.0) -> "WeylWord":
        return cls(tuple(gens), float(angle))

    @classmethod
    def identity(cls) -> "WeylWord":
        return cls()

    @property
    def phase(self) -> complex:
        return complex(np.exp(1j * self.angle))

    def __mul__(self, other: "WeylWord") -> "WeylWord":
        return multiply(self, other)

    def __len__(self):
        return len(self.factors)


def multiply(w1: WeylWord, w2: WeylWord) -> WeylWord:
    return WeylWord(w1.factors + w2.factors, w1.angle + w2.angle)


def adjoint(w: WeylWord) -> WeylWord:
    return WeylWord(tuple(f.inverse() for f in reversed(w.factors)), -w.angle)


@dataclass(frozen=True)
class NormalForm:
    """``e^{i angle} psi(rho) W(m)``."""

    angle: float
    rho: TestFn
    m: TestFn
    # the individual arguments summed into rho and m; lets combine() reuse
    # cached factor pairings instead of pairing the (new) totals
    rho_parts: tuple = field(default=(), repr=False, compare=False)
    m_parts: tuple = field(default=(), repr=False, compare=False)

    def to_dict(self, omega: complex | None = None) -> dict:
        doc = {"angle": self.angle, "rho": self.rho.to_dict(), "m": self.m.to_dict()}
        if omega is not None:
            doc["omega0"] = [omega.real, omega.imag]
        return doc

    def as_word(self) -> WeylWord:
        gens = []
        if not self.rho.is_zero:
            gens.append(Psi(self.rho))
        if not self.m.is_zero:
            gens.append(W(self.m))
        return WeylWord(tuple(gens), self.angle)


class PairingCache:
    """Thread-safe memo of pairings keyed by argument digests."""

    def __init__(self):
        self._data: dict = {}
        self._lock = threading.Lock()

    def get(self, kind: str, a: TestFn, b: TestFn, spec: QuadratureSpec, fn) -> float:
        key = (kind, a.digest(), b.digest(), spec)
        with self._lock:
            v = self._data.get(key)
        if v is None:
            v = float(fn(a, b, spec))
            with self._lock:
                self._data[key] = v
        return v

    def clear(self):
        with self._lock:
            self._data.clear()

    def __len__(self):
        return len(self._data)


CACHE = PairingCache()


def _fuse_angle(m1: TestFn, m2: TestFn, spec) -> float:
    if m1.is_zero or m2.is_zero:
        return 0.0
    return -0.5 * CACHE.get("D", m1, m2, spec, pair_D)


def _swap_angle(m: TestFn, rho: TestFn, spec) -> float:
    """Angle from ``W(m) psi(rho) = e^{i a} psi(rho) W(m)``."""
    if m.is_zero or rho.is_zero:
        return 0.0
    dm = coderivative1(m)
    if dm.is_zero:
        return 0.0
    return -CACHE.get("Dflat", dm, rho, spec, pair_Dflat)


def _sum(parts: Sequence[TestFn], rank: str) -> TestFn:
    if not parts:
        return TestFn.zero(rank)
    return TestFn._concat(rank, list(parts))


def normal_form(w: WeylWord, spec: QuadratureSpec | None = None) -> NormalForm:
    spec = spec or default_spec()
    angle = w.angle
    ms: list[TestFn] = []
    rhos: list[TestFn] = []
    for f in w.factors:
        if f.is_field:
            for m in ms:
                angle += _fuse_angle(m, f.arg, spec)
            ms.append(f.arg)
        else:
            for m in ms:
                angle += _swap_angle(m, f.arg, spec)
            rhos.append(f.arg)
    return NormalForm(float(angle), _sum(rhos, "scalar"), _sum(ms, "vector"), tuple(rhos), tuple(ms))


def combine(nf1: NormalForm, nf2: NormalForm, spec: QuadratureSpec | None = None) -> NormalForm:
    """Normal form of the product of two normal forms."""
    spec = spec or default_spec()
    m1 = nf1.m_parts or ((nf1.m,) if not nf1.m.is_zero else ())
    m2 = nf2.m_parts or ((nf2.m,) if not nf2.m.is_zero else ())
    r2 = nf2.rho_parts or ((nf2.rho,) if not nf2.rho.is_zero else ())
    r1 = nf1.rho_parts or ((nf1.rho,) if not nf1.rho.is_zero else ())
    angle = nf1.angle + nf2.angle
    for a in m1:
        for rho in r2:
            angle += _swap_angle(a, rho, spec)
    for a in m1:
        for b in m2:
            angle += _fuse_angle(a, b, spec)
    return NormalForm(float(angle), nf1.rho + nf2.rho, nf1.m + nf2.m, r1 + r2, m1 + m2)


def commutator_phase(g1: TestFn, g2: TestFn, spec: QuadratureSpec | None = None) -> float:
    """Angle of ``V(g1) V(g2) V(g1)^* V(g2)^*``, i.e. ``-<g1, D g2>``."""
    return -pair_D(g1, g2, spec or default_spec())


def _is_small(f: TestFn, tol: float) -> bool:
    return f.is_zero or l2_norm(f) <= tol


def omega0(nf: NormalForm, spec: QuadratureSpec | None = None, tol: float = TOL) -> complex:
    """Vacuum expectation of ``e^{i angle} psi(rho) W(m)``."""
    spec = spec or default_spec()
    dm = coderivative1(nf.m)
    mismatch = nf.rho - dm
    if not _is_small(mismatch, tol * max(1.0, l2_norm(nf.rho))):
        raise NotGaugeInvariant("rho differs from delta m: the word is not gauge invariant")
    if not _is_small(dm, tol):
        return 0j
    if nf.m.is_zero:
        return complex(np.exp(1j * nf.angle))
    q = pair_Dplus(nf.m, nf.m, spec).real
    return complex(np.exp(1j * nf.angle + 0.5 * q))


def beta_apply(m: TestFn, w: WeylWord, spec: QuadratureSpec | None = None) -> WeylWord:
    """``beta_m``: each ``V(g)`` picks up ``e^{i phi_m(g)}``, ``phi_m(g) = -<m, D g>``."""
    spec = spec or default_spec()
    angle = w.angle
    for f in w.factors:
        if f.kind != "V":
            raise NonObservableWord("beta_m acts on words in V generators only")
        angle += -CACHE.get("D", m, f.arg, spec, pair_D)
    return WeylWord(w.factors, angle)


def gamma_apply(s: TestFn, w: WeylWord) -> WeylWord:
    """Gauge transformation: ``W(m) -> e^{-i int s delta m}``, ``psi(rho) -> e^{i int s rho}``."""
    if s.rank != "scalar":
        raise ValueError("gauge functions are scalar")
    angle = w.angle
    for f in w.factors:
        if f.kind == "W":
            angle -= pair_integral(s, coderivative1(f.arg))
        elif f.kind == "Psi":
            angle += pair_integral(s, f.arg)
    return WeylWord(w.factors, angle)


def omega_m(m: TestFn, w: WeylWord, spec: QuadratureSpec | None = None) -> complex:
    """``omega_0 o beta_m`` on observable words."""
    return omega0(normal_form(beta_apply(m, w, spec), spec), spec)


def sector_label(nf: NormalForm) -> TestFn:
    return nf.rho


def gram_matrix(words: Sequence[WeylWord], spec: QuadratureSpec | None = None) -> np.ndarray:
    """``G_ij = omega_0(S_i^* S_j)``."""
    n = len(words)
    G = np.zeros((n, n), complex)
    for i in range(n):
        for j in range(i, n):
            G[i, j] = omega0(normal_form(adjoint(words[i]) * words[j], spec), spec)
            G[j, i] = np.conj(G[i, j])
    return G


# word scripts ---------------------------------------------------------------

def parse_script(text: str, objects: dict) -> WeylWord:
    """One generator per line: ``KIND NAME [MULTIPLIER]``.

    ``NAME`` resolves in ``objects``; ``delta:NAME`` takes the coderivative
    of a vector object and ``deltad:NAME`` applies ``delta d`` to it.
    Blank lines and ``#`` comments are ignored.
    """
    from .testfn import delta_d
    gens = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise ValueError(f"line {lineno}: expected 'KIND NAME [MULTIPLIER]'")
        kind, ref = parts[0], parts[1]
        if kind not in KINDS:
            raise ValueError(f"line {lineno}: unknown generator kind {kind!r}")
        op, _, name = ref.rpartition(":")
        if name not in objects:
            raise ValueError(f"line {lineno}: unknown object {name!r}")
        arg = objects[name]
        if op == "delta":
            arg = coderivative1(arg)
        elif op == "deltad":
            arg = delta_d(arg)
        elif op:
            raise ValueError(f"line {lineno}: unknown operator {op!r}")
        if len(parts) == 3:
            arg = arg * float(parts[2])
        try:
            gens.append(Generator(kind, arg))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return WeylWord(tuple(gens))


def words_from_scripts(scripts: Iterable[str], objects: dict) -> list[WeylWord]:
    return [parse_script(s, objects) for s in scripts]
