import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaussfield.lightcone import C_FLAT, pair_D_position
from gaussfield.propagators import (C_D, QuadratureSpec, get_grid, norm0, pair_D, pair_Dflat,
                                    pair_Dplus, pair_Ds_rho, seminorm_sq, solve_wave, with_error)
from gaussfield.testfn import (TestFn, box, coderivative1, l2_norm, partial, spacelike_separated,
                               translate)

from _util import DEFAULT, SMALL, atom, random_atom, random_curl, random_vector


def scalar_vec(s):
    return TestFn.vector([s, TestFn.zero(), TestFn.zero(), TestFn.zero()])


def test_constants():
    assert C_D == pytest.approx(2 * np.pi)
    assert C_FLAT == pytest.approx(-1 / (8 * np.pi))


def test_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(n_azimuth=15)
    with pytest.raises(ValueError):
        QuadratureSpec(p_max=-1.0)
    with pytest.raises(ValueError):
        QuadratureSpec.from_dict({"bogus": 1})
    spec = QuadratureSpec.from_dict({"p_max": 12, "n_radial": 20})
    assert spec.p_max == 12.0 and spec.n_radial == 20


# pair_D ------------------------------------------------------------------------

def test_antisymmetry_exact(rng):
    for _ in range(5):
        f, g = random_vector(rng), random_vector(rng, center=(0.5, 0, 0, 0))
        assert pair_D(f, g, SMALL) == -pair_D(g, f, SMALL)
        assert pair_D(f, f, SMALL) == 0.0


def test_bilinear(rng):
    f, g, h = (random_vector(rng) for _ in range(3))
    lhs = pair_D(f * 2.0 + h, g, SMALL)
    assert lhs == pytest.approx(2 * pair_D(f, g, SMALL) + pair_D(h, g, SMALL), rel=1e-10)


def test_position_space_oracle():
    """``f = (s,0,0,0)``, ``g = (d0 s,0,0,0)`` against the light-cone route."""
    s = atom((0, 0, 0, 0), (0.6, 0.8, 0.8, 0.8))
    ds = partial(s, 0)
    momentum = pair_D(scalar_vec(s), scalar_vec(ds), DEFAULT)
    position = pair_D_position(s, ds, DEFAULT)
    assert momentum == pytest.approx(position, rel=1e-3)


def test_spacelike_vanishes():
    f = scalar_vec(atom((0, 0, 0, 0), (0.4, 0.6, 0.6, 0.6)))
    g = scalar_vec(atom((0, 3.0, 0.5, 0), (0.4, 0.6, 0.6, 0.6)))
    assert spacelike_separated(f, g)
    assert abs(pair_D(f, g, DEFAULT)) < 1e-6 * norm0(f, DEFAULT) * norm0(g, DEFAULT)


def test_box_kernel(rng):
    f, g = random_atom(rng), random_atom(rng)
    val = pair_D(scalar_vec(box(f)), scalar_vec(g), SMALL)
    # box(f)~ vanishes on the shell, so compare against the off-shell size
    assert abs(val) < 1e-6 * l2_norm(box(f)) * l2_norm(g)


def test_with_error_fields(rng):
    f, g = random_vector(rng), random_vector(rng)
    doc = with_error(pair_D, f, g, SMALL)
    assert set(doc) == {"value", "refinement_delta", "tail_bound", "error"}
    assert doc["error"] >= doc["refinement_delta"] >= 0


# pair_Dplus --------------------------------------------------------------------

def test_dplus_zero(rng):
    assert pair_Dplus(TestFn.zero("vector"), random_vector(rng), SMALL) == 0


def test_dplus_decomposition(rng):
    for _ in range(5):
        f, g = random_vector(rng), random_vector(rng, center=(0.3, 0.2, 0, 0))
        d = pair_D(f, g, SMALL)
        dp = pair_Dplus(f, g, SMALL)
        assert abs(d - 2 * dp.imag) <= 1e-8 * max(abs(d), abs(dp))


def test_dplus_transverse_negative(rng):
    """``Re <g, D_+ g> = -|g~_T|^2`` for divergence free ``g``."""
    grid = get_grid(SMALL)
    for _ in range(4):
        g = random_curl(rng)
        val = pair_Dplus(g, g, SMALL).real
        amp = solve_wave(g, SMALL).values
        n = grid.unit_p()
        spatial = amp[1:]
        radial = sum(n[i] * spatial[i] for i in range(3))
        trans = sum(np.abs(spatial[i] - n[i] * radial) ** 2 for i in range(3))
        direct = -C_D * float(np.sum(grid.measure * np.broadcast_to(trans, grid.shape).ravel()))
        assert val <= 0
        assert val == pytest.approx(direct, rel=1e-8)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_dplus_positive_on_curls(seed):
    g = random_curl(np.random.default_rng(seed))
    assert pair_Dplus(g, g, SMALL).real <= 1e-14


# solve_wave --------------------------------------------------------------------

def test_solve_wave_zero():
    assert np.all(solve_wave(TestFn.zero("vector"), SMALL).values == 0)


def test_solve_wave_translation(rng):
    m = random_vector(rng)
    a = np.array([0.3, -0.4, 0.2, 0.7])
    lhs = solve_wave(translate(m, a), SMALL).values
    rhs = solve_wave(m, SMALL).translate(a).values
    assert np.allclose(lhs, rhs, atol=1e-10 * np.max(np.abs(rhs)))


def test_solve_wave_matches_fourier(rng):
    m = random_vector(rng)
    grid = get_grid(SMALL)
    idx = rng.integers(0, grid.size, 20)
    p = grid.momenta()[idx]
    direct = m.fourier(p).T
    amp = solve_wave(m, SMALL).values.reshape(4, -1)[:, idx]
    assert np.allclose(amp, direct, atol=1e-13)


def test_shell_conjugation_symmetry(rng):
    """Real functions: values at ``-p`` on the lower shell are conjugates."""
    m = random_vector(rng)
    grid = get_grid(SMALL)
    p = grid.momenta()[:50]
    assert np.allclose(m.fourier(-p), np.conj(m.fourier(p)), atol=1e-14)
    amp = solve_wave(m, SMALL).values
    assert grid.reflect(grid.reflect(amp)).shape == amp.shape
    assert np.array_equal(grid.reflect(grid.reflect(amp)), amp)


# pair_Dflat --------------------------------------------------------------------

def test_dflat_self_pairing_zero(rng):
    r = random_atom(rng)
    assert pair_Dflat(r, r, SMALL) == 0.0


def test_dflat_antisymmetric(rng):
    a, b = random_atom(rng), random_atom(rng, center=(0.8, 0, 0, 0))
    assert pair_Dflat(a, b, SMALL) == -pair_Dflat(b, a, SMALL)


def test_dflat_spacelike_exact_zero():
    a = atom((0, 0, 0, 0), (0.4, 0.5, 0.5, 0.5))
    b = atom((0, 0, 0, 3.0), (0.4, 0.5, 0.5, 0.5))
    assert pair_Dflat(a, b, SMALL) == 0.0


def test_dflat_box_oracle():
    """``<r1, Dflat box r2> = <r1, D r2>``."""
    r1 = atom((0.0, 0, 0, 0), (0.7, 0.9, 0.9, 0.9))
    r2 = atom((0.6, 0.2, 0, 0), (0.6, 0.8, 0.8, 0.8))
    lhs = pair_Dflat(r1, box(r2), SMALL)
    rhs = pair_Ds_rho(r2, r1, DEFAULT)
    assert lhs == pytest.approx(rhs, rel=1e-2)


# pair_Ds_rho -------------------------------------------------------------------

def test_ds_rho_zero(rng):
    assert pair_Ds_rho(TestFn.zero(), random_atom(rng), SMALL) == 0.0


def test_ds_rho_spacelike():
    s = atom((0, 0, 0, 0), (0.4, 0.6, 0.6, 0.6))
    r = atom((0, 0, 3.5, 0), (0.4, 0.6, 0.6, 0.6))
    assert abs(pair_Ds_rho(s, r, DEFAULT)) < 1e-6 * norm0(s, DEFAULT) * norm0(r, DEFAULT)


def test_ds_rho_position_oracle(rng):
    for _ in range(2):
        s = random_atom(rng, widths=(0.6, 0.9))
        r = random_atom(rng, center=(0.7, 0, 0, 0), widths=(0.6, 0.9))
        mom = pair_Ds_rho(s, r, DEFAULT)
        pos = pair_D_position(r, s, DEFAULT)
        assert mom == pytest.approx(pos, rel=1e-3, abs=1e-8 * norm0(s, DEFAULT) * norm0(r, DEFAULT))


def test_ds_rho_equals_scalar_vector_pairing(rng):
    s, r = random_atom(rng), random_atom(rng)
    assert pair_Ds_rho(s, r, SMALL) == pytest.approx(pair_D(scalar_vec(r), scalar_vec(s), SMALL), rel=1e-12)


def test_coderivative_pairing_identity(rng):
    """``<delta m, D s> = -<m, D d s>`` (integration by parts)."""
    m, s = random_vector(rng), random_atom(rng)
    lhs = pair_D(coderivative1(m), s, SMALL)
    grad = TestFn.vector([partial(s, mu) for mu in range(4)])
    rhs = -pair_D(m, grad, SMALL)
    assert lhs == pytest.approx(rhs, rel=1e-8)


def test_seminorm_sq_nonnegative(rng):
    assert seminorm_sq(random_vector(rng), SMALL) >= 0


def test_cache_budget_shared_between_grids(rng):
    a, b = get_grid(SMALL), get_grid(DEFAULT)
    assert a._amps is b._amps
    f = random_vector(rng)
    # same function, different grids: distinct entries
    assert solve_wave(f, SMALL).grid is a and solve_wave(f, DEFAULT).grid is b
