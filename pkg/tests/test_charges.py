import numpy as np
import pytest

from gaussfield.charges import (ChargeConfig, ChargeError, GeometryCase, MeasurementFn, build_dipole,
                                charge_density, expected_readout, gauss_readout, gauss_readout_with_error,
                                geometry_case, phi_m)
from gaussfield.propagators import get_grid, norm0
from gaussfield.testfn import TestFn, delta_d, spacelike_separated

from _util import GAUSS, LOCALITY, SMALL, atom, random_vector, time_profile

THETA = atom((0, 0, 0, 0), (0.5, 0.5, 0.5, 0.5))
SIGMA = atom((0, 0, 0, 2.5), (0.5, 0.5, 0.5, 0.5))
TAU = time_profile(0.0, 0.3)


def dipole(r=3.0, theta=THETA):
    return build_dipole(ChargeConfig(theta, SIGMA, r))


def fixed_box():
    return MeasurementFn(TAU, (0, 0, 0), (1.4, 1.4, 1.4), 0.4)


def both_box():
    return MeasurementFn(TAU, (0, 0, 1.5), (2.4, 2.4, 3.4), 0.4)


def comp_box():
    return MeasurementFn(TAU, (0, 0, 7.5), (4.4, 4.4, 4.4), 0.4)


# configuration ---------------------------------------------------------------

def test_sigma_must_be_normalized():
    with pytest.raises(ChargeError):
        ChargeConfig(THETA, SIGMA * 2.0, 1.0)


def test_sigma_must_avoid_origin():
    with pytest.raises(ChargeError):
        ChargeConfig(THETA, atom((0, 0, 0, 0), (0.5, 0.5, 0.5, 0.5)), 1.0)


def test_r_must_be_positive():
    with pytest.raises(ChargeError):
        ChargeConfig(THETA, SIGMA, 0.0)


def test_measurement_validation():
    with pytest.raises(ChargeError):
        MeasurementFn(TAU * 2.0, (0, 0, 0), (1, 1, 1), 0.4)
    with pytest.raises(ChargeError):
        MeasurementFn(TAU, (0, 0, 0), (1, 1, 1), 0.0)


def test_chi_plateau_and_margin():
    h = fixed_box().h
    time_factor = TAU.coef[0] * np.exp(-1.0)  # tau's time factor at its center
    assert h.evaluate([0.0, 1.3, -1.3, 0.5])[0] == pytest.approx(time_factor, rel=1e-14)
    assert 0 < h.evaluate([0.0, 1.6, 0.0, 0.0])[0] < time_factor
    assert h.evaluate([0.0, 1.81, 0.0, 0.0])[0] == 0.0


# dipole function ---------------------------------------------------------------

def test_total_charge():
    assert dipole().charge == pytest.approx(1.0, rel=1e-12)
    neutral = atom((0, 0, 0, 0), (0.5, 0.5, 0.5, 0.5), monomial=(0, 1, 0, 0))
    assert dipole(theta=neutral).charge == pytest.approx(0.0, abs=1e-15)


def test_coderivative_equals_density(rng):
    """``delta m = theta - theta * sigma_r`` at points around both components."""
    d = dipole(r=1.0)
    rho = charge_density(d)
    h = 1e-4
    pts = np.vstack([rng.uniform(-0.4, 0.4, (3, 4)),
                     rng.uniform(-0.4, 0.4, (3, 4)) + np.array([0, 0, 0, 2.5])])
    for x in pts:
        div = 0.0
        for mu in range(4):
            e = np.zeros(4)
            e[mu] = h
            dm = (d.evaluate(x + e)[0, mu] - d.evaluate(x - e)[0, mu]) / (2 * h)
            div += dm if mu == 0 else -dm
        assert div == pytest.approx(rho.evaluate(x)[0], abs=1e-4)


def test_momentum_dual_route(rng):
    """Ray-integral evaluator against the 4-D tensor-rule oracle."""
    d = dipole(r=1.5)
    p = rng.normal(size=(8, 4)) * 2.0
    a = d.momentum(p)
    b = d.momentum_direct(p)
    assert np.max(np.abs(a - b)) <= 1e-3 * np.max(np.abs(b))


def test_shell_table_matches_ray_integral(rng):
    d = dipole(r=1.5)
    grid = get_grid(SMALL)
    vals = d.shell_values(grid).reshape(4, -1)
    idx = rng.integers(0, grid.size, 8)
    direct = d.momentum(grid.momenta()[idx]).T
    assert np.allclose(vals[:, idx], direct, atol=1e-8 * np.max(np.abs(direct)))


def test_support_hull():
    d = dipole(r=2.0)
    bb = d.support().bounding_box()
    assert np.all(bb.lo <= THETA.support().bounding_box().lo)
    assert bb.hi[3] >= 2.0 * 2.5


# charge density ---------------------------------------------------------------

@pytest.mark.parametrize("r", [0.5, 1.0, 4.0, 16.0])
def test_density_integrates_to_zero(r):
    rho = charge_density(dipole(r=r))
    assert abs(rho.integral()) < 1e-6
    # equivalently (2 pi)^2 sigma_r~(0) = 1, so the transform vanishes at p = 0
    assert (2 * np.pi) ** 2 * rho.sigma_r.fourier(np.zeros(4))[0] == pytest.approx(1.0, abs=1e-12)


def test_convolution_identity_by_quadrature():
    rho = charge_density(dipole(r=1.0))
    c = np.array([0, 0, 0, 2.5])
    n = 9
    axes = [np.linspace(-0.75, 0.75, n) for _ in range(4)]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 4) + c
    vals = rho.compensator(X)
    step = 1.5 / (n - 1)
    # trapezoid sum of a smooth compactly supported function is spectrally accurate
    assert vals.sum() * step ** 4 == pytest.approx(1.0, rel=1e-2)


def test_density_equals_theta_near_fixed_charge(rng):
    rho = charge_density(dipole(r=3.0))
    assert rho.components_separated()
    x = rng.uniform(-0.45, 0.45, (10, 4))
    assert np.allclose(rho.evaluate(x), THETA.evaluate(x)[:, 0], atol=1e-15)


# geometry and readouts ------------------------------------------------------------

def test_geometry_cases():
    assert geometry_case(dipole(3.0), fixed_box()) is GeometryCase.FIXED_INSIDE
    assert geometry_case(dipole(1.0), both_box()) is GeometryCase.BOTH_INSIDE
    assert geometry_case(dipole(3.0), comp_box()) is GeometryCase.COMPENSATOR_INSIDE
    tight = MeasurementFn(TAU, (0, 0, 0), (0.9, 0.9, 0.9), 0.4)
    assert geometry_case(dipole(1.0), tight) is GeometryCase.INDETERMINATE
    assert expected_readout(GeometryCase.INDETERMINATE, 1.0) is None


@pytest.mark.parametrize("r,box,expect", [(3.0, fixed_box, 1.0), (1.0, both_box, 0.0), (3.0, comp_box, -1.0)])
def test_gauss_table(r, box, expect):
    assert gauss_readout(dipole(r), box(), GAUSS) == pytest.approx(expect, abs=1e-3)


def test_readout_linear_in_theta():
    t2 = atom((0.1, 0.1, 0, 0), (0.4, 0.4, 0.4, 0.4), q=0.5)
    h = fixed_box()
    a = gauss_readout(dipole(3.0), h, GAUSS)
    b = gauss_readout(dipole(3.0, theta=t2), h, GAUSS)
    ab = gauss_readout(dipole(3.0, theta=THETA + t2), h, GAUSS)
    assert ab == pytest.approx(a + b, abs=1e-12)


def test_readout_time_invariance():
    d = dipole(3.0)
    shifted = MeasurementFn(time_profile(0.05, 0.3), (0, 0, 0), (1.4, 1.4, 1.4), 0.4)
    assert geometry_case(d, shifted) is GeometryCase.FIXED_INSIDE
    assert abs(gauss_readout(d, shifted, GAUSS) - gauss_readout(d, fixed_box(), GAUSS)) < 1e-3


def test_readout_with_error_report():
    res = gauss_readout_with_error(dipole(3.0), fixed_box(), GAUSS)
    assert res["case"] == "FixedInside" and res["expected"] == pytest.approx(1.0)
    assert res["margin_bias_estimate"] == 0.0
    assert res["error"] < 1e-3


def test_phi_m_of_current_is_minus_readout():
    d, h = dipole(3.0), fixed_box()
    assert phi_m(d, delta_d(h.h), SMALL) == pytest.approx(-gauss_readout(d, h, SMALL), rel=1e-10)


# phi_m -----------------------------------------------------------------------------

def test_phi_m_spacelike(rng):
    m = random_vector(rng)
    g = random_vector(rng, center=(0, 0, 4.0, 0))
    assert spacelike_separated(m.support(), g.support())
    assert abs(phi_m(m, g, LOCALITY)) < 1e-6 * norm0(m, LOCALITY) * norm0(g, LOCALITY)


def test_phi_m_self_zero(rng):
    m = random_vector(rng)
    assert phi_m(m, m, SMALL) == 0.0


def test_phi_m_dipole_rank_check():
    with pytest.raises(ValueError):
        phi_m(dipole(1.0), TestFn.zero("scalar") + atom((0, 0, 0, 0), (1, 1, 1, 1)), SMALL)
