import math

import numpy as np
import pytest

from kpzlattice.ensembles import compressibility
from kpzlattice.gradient import solve_gradient_condition
from kpzlattice.lattice import GibbsSpec, LocalFunction, nearest_neighbor, speed_change, speed_change_omega, ssep
from kpzlattice.thermodynamics import (
    EXACT,
    FINITE_DIFFERENCE,
    ThermoCurve,
    characteristic_velocity,
    chi_times_d,
    diffusivity,
    einstein_relation_check,
    flux,
    flux_curve,
    kpz_lambda,
    static_average,
    thermo_curve,
    uniform_grid,
)

PAIR = LocalFunction.from_terms({(0, 1): 1.0})
ETA0 = LocalFunction.occupation(0)
GRID = uniform_grid(99)
BERNOULLI = GibbsSpec()


def nn_pair_oracle(beta_j, rho):
    """Exact <eta0 eta1>, its derivatives and chi for the nearest-neighbour lattice gas.

    With z = exp(-beta J) the pair probabilities obey p11 p00 = z p10^2, so
    p10 = (1 - s) / (2 (1 - z)), s = sqrt(1 - 4 (1 - z) rho (1 - rho)).
    """
    z = math.exp(-beta_j)
    u, du = rho * (1 - rho), 1 - 2 * rho
    s = math.sqrt(1 - 4 * (1 - z) * u)
    p10 = (1 - s) / (2 * (1 - z))
    dp = du / s
    d2p = (-2 * s + 2 * (1 - z) * du * du / s) / s ** 2
    return rho - p10, 1 - dp, -d2p, u * s


# ---------------------------------------------------------------- static averages

def test_pair_average_product_measure():
    for rho in (0.1, 0.5, 0.83):
        avg = static_average(PAIR, BERNOULLI, rho)
        assert (avg.value, avg.d1, avg.d2) == pytest.approx((rho * rho, 2 * rho, 2.0), abs=1e-15)
        assert avg.method == EXACT


@pytest.mark.parametrize("b", [0.3, -0.25])
def test_speed_change_omega_average(b):
    omega = speed_change_omega(b)
    for rho in GRID[::7]:
        avg = static_average(omega, BERNOULLI, rho)
        assert avg.value == pytest.approx(rho + b * rho * rho, abs=1e-15)
        assert avg.d1 == pytest.approx(1 + 2 * b * rho, abs=1e-15)


def test_constant_function_has_zero_derivatives():
    for spec in (BERNOULLI, nearest_neighbor(1.0, 0.5)):
        avg = static_average(LocalFunction.constant(2.5), spec, 0.4)
        assert (avg.value, avg.d1, avg.d2) == (2.5, 0.0, 0.0)


@pytest.mark.parametrize("rho", [0.2, 0.5, 0.7])
def test_finite_difference_path_against_closed_form(rho):
    beta_j = 0.5
    value, d1, d2, _ = nn_pair_oracle(beta_j, rho)
    avg = static_average(PAIR, nearest_neighbor(1.0, beta_j), rho)
    assert avg.method == FINITE_DIFFERENCE
    assert avg.value == pytest.approx(value, abs=1e-14)
    assert avg.d1 == pytest.approx(d1, abs=1e-8)
    assert avg.d2 == pytest.approx(d2, abs=1e-8)


@pytest.mark.parametrize("rho", [0.15, 0.5, 0.9])
def test_compressibility_closed_form(rho):
    assert compressibility(nearest_neighbor(1.0, 0.5), rho) == pytest.approx(nn_pair_oracle(0.5, rho)[3], abs=1e-13)


# ---------------------------------------------------------------- diffusivity and flux

def test_ssep_diffusivity_is_one():
    assert all(diffusivity(ETA0, BERNOULLI, r) == 1.0 for r in GRID)


@pytest.mark.parametrize("b", [0.3, -0.3])
def test_speed_change_diffusivity(b):
    omega = speed_change_omega(b)
    for rho in GRID:
        assert diffusivity(omega, BERNOULLI, rho) == pytest.approx(1 + 2 * b * rho, abs=1e-14)


def test_b_zero_reduces_to_ssep():
    for rho in GRID[::11]:
        assert diffusivity(speed_change_omega(0.0), BERNOULLI, rho) == diffusivity(ETA0, BERNOULLI, rho)
        assert flux(speed_change(0.0), BERNOULLI, rho) == pytest.approx(flux(ssep(), BERNOULLI, rho), abs=1e-15)


def test_ssep_flux():
    for rho in GRID:
        assert flux(ssep(), BERNOULLI, rho) == pytest.approx(rho * (1 - rho), abs=1e-15)


@pytest.mark.parametrize("b", [0.3, -0.2])
def test_speed_change_flux_is_chi_times_d(b):
    c = speed_change(b)
    for rho in GRID:
        expected = (1 + 2 * b * rho) * rho * (1 - rho) * c.scale
        assert flux(c, BERNOULLI, rho) == pytest.approx(expected, abs=1e-14)


def test_flux_vanishes_at_the_boundary():
    assert flux(speed_change(0.3), BERNOULLI, 0.0) == 0.0
    assert flux(speed_change(0.3), BERNOULLI, 1.0) == 0.0


@pytest.mark.parametrize("rate", [ssep(), speed_change(0.3), speed_change(-0.4)])
def test_flux_equals_chi_d_on_99_points(rate):
    omega = solve_gradient_condition(rate).omega
    for rho in GRID:
        assert abs(flux(rate, BERNOULLI, rho) - chi_times_d(omega, BERNOULLI, rho).value) <= 1e-10


# ---------------------------------------------------------------- lambda, Einstein relation, velocity

def test_ssep_lambda():
    for rho in GRID[::9]:
        assert kpz_lambda(1.0, ssep(), BERNOULLI, rho) == pytest.approx(-1.0, abs=1e-14)
        assert kpz_lambda(0.0, ssep(), BERNOULLI, rho) == 0.0


@pytest.mark.parametrize("b", [0.3, -0.2])
def test_speed_change_curvature(b):
    c = speed_change(b)
    for rho in GRID[::5]:
        hpp = flux_curve(c, BERNOULLI, rho).d2
        assert hpp == pytest.approx((-2 + 2 * b * (2 - 6 * rho)) * c.scale, abs=1e-13)


def test_speed_change_lambda_depends_on_density():
    c = speed_change(0.3)
    assert kpz_lambda(1.0, c, BERNOULLI, 0.2) != pytest.approx(kpz_lambda(1.0, c, BERNOULLI, 0.7))


def test_lambda_is_linear_in_asymmetry():
    c = speed_change(0.3)
    lam1 = kpz_lambda(1.0, c, BERNOULLI, 0.4)
    for a in (0.25, 2.0, -1.5):
        assert kpz_lambda(a, c, BERNOULLI, 0.4) == pytest.approx(a * lam1, abs=1e-14)


def test_einstein_relation_ssep():
    for row in einstein_relation_check(ssep(), ETA0, BERNOULLI, GRID[::10]):
        assert row.dlambda_da == pytest.approx(-1.0, abs=1e-13)
        assert row.half_chid_pp == pytest.approx(-1.0, abs=1e-13)


@pytest.mark.parametrize("b", [0.3, -0.3, 1e-9])
def test_einstein_relation_speed_change(b):
    c = speed_change(b)
    omega = solve_gradient_condition(c).omega
    for row in einstein_relation_check(c, omega, BERNOULLI, GRID):
        rho = row.rho
        expected = 0.5 * c.scale * (-2 + 2 * b * (2 - 6 * rho))
        assert row.residual <= 1e-10
        assert row.half_chid_pp == pytest.approx(expected, abs=1e-12)


def test_einstein_relation_needs_two_asymmetries():
    with pytest.raises(ValueError):
        einstein_relation_check(ssep(), ETA0, BERNOULLI, [0.5], a_grid=[1.0])


def test_characteristic_velocity():
    assert characteristic_velocity(ssep(), BERNOULLI, 0.5) == 0.0
    assert characteristic_velocity(ssep(), BERNOULLI, 0.3) == pytest.approx(0.4, abs=1e-15)


def test_symmetric_model_has_no_drift_at_half_filling():
    spec = GibbsSpec((((0, 1), 1.0), ((0,), -1.0)), 0.6)
    assert spec.is_particle_hole_symmetric
    omega = LocalFunction.occupation(0)
    # any particle-hole symmetric current has H'(1/2) = 0; check with the ssep current
    assert abs(characteristic_velocity(ssep(), spec, 0.5)) <= 1e-8
    assert diffusivity(omega, spec, 0.5) == pytest.approx(1.0, abs=1e-8)


# ---------------------------------------------------------------- curves

def test_thermo_curve_round_trip_and_rows():
    c = speed_change(0.3)
    omega = solve_gradient_condition(c).omega
    curve = thermo_curve(c, omega, BERNOULLI, GRID, a=0.7)
    back = ThermoCurve.from_csv(curve.to_csv(), a=0.7)
    assert np.array_equal(back.Hpp, curve.Hpp)
    assert np.max(curve.einstein_residual) <= 1e-10
    row = curve.row(0.5)
    assert row["lambda"] == pytest.approx(0.35 * row["Hpp"], abs=1e-15)
    with pytest.raises(KeyError):
        curve.row(0.123456)


def test_zero_asymmetry_curve_has_zero_lambda():
    curve = thermo_curve(ssep(), ETA0, BERNOULLI, GRID, a=0.0)
    assert np.all(curve.lam == 0.0)
    assert np.allclose(curve.H, curve.chi * curve.D, atol=1e-15)


def test_interacting_curve_is_tagged_finite_difference():
    curve = thermo_curve(ssep(), ETA0, nearest_neighbor(1.0, 0.3), [0.4], a=1.0)
    assert curve.method == [FINITE_DIFFERENCE]
