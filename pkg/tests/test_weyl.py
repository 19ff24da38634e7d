import numpy as np
import pytest

from gaussfield.propagators import norm0, pair_D, pair_Dplus
from gaussfield.testfn import TestFn, coderivative1, delta_d, pair_integral, translate
from gaussfield.weyl import (CACHE, NonObservableWord, NormalForm, NotGaugeInvariant, Psi, V, W, WeylWord,
                             adjoint, beta_apply, combine, commutator_phase, gamma_apply, gram_matrix,
                             normal_form, omega0, omega_m, parse_script, sector_label)

from _util import DEFAULT, LOCALITY, SMALL, WordPool, random_atom, random_curl, random_vector


def wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def is_identity(nf: NormalForm, tol=1e-10):
    return nf.rho.is_zero and nf.m.is_zero and abs(wrap(nf.angle)) < tol


# generators and words ---------------------------------------------------------

def test_generator_rank_checks(rng):
    with pytest.raises(ValueError):
        V(random_atom(rng))
    with pytest.raises(ValueError):
        Psi(random_vector(rng))
    with pytest.raises(ValueError):
        V(random_vector(rng))  # not divergence free


def test_unit_law(rng):
    g = random_curl(rng)
    w = WeylWord.of(V(g), angle=0.3)
    nf0 = normal_form(w, SMALL)
    nf1 = normal_form(WeylWord.of(V(TestFn.zero("vector"))) * w * WeylWord.of(V(TestFn.zero("vector"))), SMALL)
    assert nf1.angle == nf0.angle and nf1.m == nf0.m and nf1.rho == nf0.rho


def test_identity_normal_form():
    assert is_identity(normal_form(WeylWord.identity(), SMALL))
    assert omega0(normal_form(WeylWord.identity(), SMALL), SMALL) == 1


def test_square_of_generator(rng):
    g = random_curl(rng)
    nf = normal_form(WeylWord.of(V(g), V(g)), SMALL)
    assert nf.angle == 0.0
    assert np.allclose(nf.m.evaluate(np.zeros(4)), 2 * g.evaluate(np.zeros(4)))


def test_unitarity(rng):
    pool = WordPool(rng)
    for _ in range(20):
        w = pool.word(int(rng.integers(1, 7)))
        assert is_identity(normal_form(w * adjoint(w), SMALL))
        assert is_identity(normal_form(adjoint(w) * w, SMALL))


def test_associativity(rng):
    pool = WordPool(rng)
    for _ in range(40):
        w1, w2, w3 = (pool.word(int(rng.integers(1, 4))) for _ in range(3))
        n1, n2, n3 = (normal_form(w, SMALL) for w in (w1, w2, w3))
        left = combine(combine(n1, n2, SMALL), n3, SMALL)
        right = combine(n1, combine(n2, n3, SMALL), SMALL)
        direct = normal_form(w1 * w2 * w3, SMALL)
        assert abs(wrap(left.angle - right.angle)) < 1e-8
        assert abs(wrap(left.angle - direct.angle)) < 1e-8
        assert left.m == right.m == direct.m and left.rho == right.rho == direct.rho


def test_gauge_invariant_product(rng):
    m1, m2 = random_vector(rng), random_vector(rng, center=(0.4, 0, 0, 0))
    w = WeylWord.of(Psi(coderivative1(m1)), W(m1), Psi(coderivative1(m2)), W(m2))
    nf = normal_form(w, SMALL)
    assert nf.rho == coderivative1(m1 + m2)
    assert nf.m == m1 + m2


def test_spacelike_pair_adds(rng):
    g1 = random_curl(rng)
    g2 = translate(random_curl(rng), (0, 0, 4.5, 0))
    nf = normal_form(WeylWord.of(V(g1), V(g2)), DEFAULT)
    assert abs(nf.angle) < 1e-6


def test_commutator_phase(rng):
    g1, g2 = random_curl(rng), random_curl(rng, center=(0.3, 0, 0, 0))
    assert commutator_phase(g1, g1, SMALL) == 0.0
    c = commutator_phase(g1, g2, SMALL)
    assert c == -pair_D(g1, g2, SMALL)
    w = WeylWord.of(V(g1), V(g2), V(g1).inverse(), V(g2).inverse())
    nf = normal_form(w, SMALL)
    assert nf.m.is_zero
    assert wrap(nf.angle - c) == pytest.approx(0.0, abs=1e-12)


def test_commutator_spacelike(rng):
    g1 = random_curl(rng)
    g2 = translate(random_curl(rng), (0, 4.5, 0, 0))
    assert abs(commutator_phase(g1, g2, LOCALITY)) < 1e-6 * norm0(g1, LOCALITY) * norm0(g2, LOCALITY)


# states ------------------------------------------------------------------------

def test_omega0_of_V(rng):
    g = random_curl(rng)
    val = omega0(normal_form(WeylWord.of(V(g)), SMALL), SMALL)
    assert abs(val) <= 1
    assert val == pytest.approx(np.exp(0.5 * pair_Dplus(g, g, SMALL).real), rel=1e-12)


def test_omega0_charged_sector_vanishes(rng):
    m = random_vector(rng)
    nf = normal_form(WeylWord.of(Psi(coderivative1(m)), W(m)), SMALL)
    assert omega0(nf, SMALL) == 0


def test_omega0_rejects_gauge_variant(rng):
    with pytest.raises(NotGaugeInvariant):
        omega0(normal_form(WeylWord.of(W(random_vector(rng))), SMALL), SMALL)


def test_gram_matrix_psd(rng):
    words = [WeylWord.of(V(random_curl(rng)), angle=rng.uniform(0, 6)) for _ in range(5)]
    m = random_vector(rng)
    words.append(WeylWord.of(Psi(coderivative1(m)), W(m)))
    G = gram_matrix(words, SMALL)
    assert np.allclose(G, G.conj().T)
    assert np.min(np.linalg.eigvalsh(G)) >= -1e-8
    # different sectors are orthogonal
    assert G[0, 5] == 0


def test_sector_label(rng):
    m = random_vector(rng)
    nf = normal_form(WeylWord.of(Psi(coderivative1(m)), W(m)), SMALL)
    assert sector_label(nf) == coderivative1(m)


# automorphisms ----------------------------------------------------------------

def test_beta_rejects_unobservable(rng):
    with pytest.raises(NonObservableWord):
        beta_apply(random_vector(rng), WeylWord.of(W(random_vector(rng))), SMALL)


def test_beta_spacelike_is_trivial(rng):
    m = translate(random_vector(rng), (0, 0, 0, 4.5))
    w = WeylWord.of(V(random_curl(rng)), angle=0.2)
    assert abs(beta_apply(m, w, DEFAULT).angle - 0.2) < 1e-6 * norm0(m, DEFAULT) * norm0(w.factors[0].arg, DEFAULT)


def test_beta_group_property(rng):
    m = random_vector(rng)
    w = WeylWord.of(V(random_curl(rng)), V(random_curl(rng)), angle=0.4)
    back = beta_apply(-m, beta_apply(m, w, SMALL), SMALL)
    assert back.angle == pytest.approx(w.angle, abs=1e-15)


def test_beta_divergence_free_m_on_current(rng):
    """``delta m = 0``: the current exponential is left alone."""
    from gaussfield.charges import MeasurementFn
    from _util import time_profile
    m = random_curl(rng)
    h = MeasurementFn(time_profile(0, 0.3), (0, 0, 0), (1.0, 1.0, 1.0), 0.4)
    w = WeylWord.of(V(delta_d(h.h)))
    assert abs(beta_apply(m, w, SMALL).angle) < 1e-10
    assert omega_m(m, w, SMALL) == pytest.approx(omega0(normal_form(w, SMALL), SMALL), abs=1e-10)


def test_omega_m_phase_only(rng):
    m = random_vector(rng)
    w = WeylWord.of(V(random_curl(rng)))
    assert abs(omega_m(m, w, SMALL)) == pytest.approx(abs(omega0(normal_form(w, SMALL), SMALL)), rel=1e-12)


def test_gamma_gauge_invariant_word(rng):
    for _ in range(5):
        s, m = random_atom(rng), random_vector(rng)
        w = WeylWord.of(Psi(coderivative1(m)), W(m), angle=0.1)
        assert abs(gamma_apply(s, w).angle - 0.1) < 1e-10


def test_gamma_on_psi_matches_direct_integral(rng):
    s, r = random_atom(rng), random_atom(rng)
    # tensor Gauss-Legendre rule on the intersection of the supports
    a, b = s.support().bounding_box(), r.support().bounding_box()
    lo, hi = np.maximum(a.lo, b.lo), np.minimum(a.hi, b.hi)
    u, wu = np.polynomial.legendre.leggauss(40)
    axes = [0.5 * (lo[k] + hi[k]) + 0.5 * (hi[k] - lo[k]) * u for k in range(4)]
    wts = [0.5 * (hi[k] - lo[k]) * wu for k in range(4)]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 4)
    W4 = np.einsum("i,j,k,l->ijkl", *wts).ravel()
    direct = float(np.sum(W4 * s.evaluate(X)[:, 0] * r.evaluate(X)[:, 0]))
    assert gamma_apply(s, WeylWord.of(Psi(r))).angle == pytest.approx(direct, rel=1e-6)
    assert gamma_apply(s, WeylWord.of(Psi(r))).angle == pytest.approx(pair_integral(s, r), rel=1e-12)


def test_gamma_trivial_on_transverse_W(rng):
    g = random_curl(rng)
    assert gamma_apply(random_atom(rng), WeylWord.of(W(g))).angle == 0.0


# scripts ------------------------------------------------------------------------

def test_parse_script(rng):
    objs = {"g": random_curl(rng), "m": random_vector(rng)}
    w = parse_script("V g\n# comment\nPsi delta:m\nW m -1\n\n", objs)
    assert [f.kind for f in w.factors] == ["V", "Psi", "W"]
    assert w.factors[2].arg == -objs["m"]
    for bad in ("X g", "V nope", "V op:g", "V g 1 2", "V m"):
        with pytest.raises(ValueError):
            parse_script(bad, objs)


def test_normal_form_json(rng):
    nf = normal_form(WeylWord.of(V(random_curl(rng))), SMALL)
    doc = nf.to_dict(omega0(nf, SMALL))
    assert set(doc) == {"angle", "rho", "m", "omega0"}
    assert TestFn.from_dict(doc["m"]) == nf.m


def test_cache_is_used(rng):
    g1, g2 = random_curl(rng), random_curl(rng)
    CACHE.clear()
    normal_form(WeylWord.of(V(g1), V(g2)), SMALL)
    assert len(CACHE) == 1
