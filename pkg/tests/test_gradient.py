import itertools

import numpy as np
import pytest

from kpzlattice.gradient import (
    _current_identity_sides,
    _DesignLP,
    _gradient_matrix,
    _gradient_rhs,
    check_detailed_balance,
    classify,
    design_gradient_rate,
    generator_invariance_residual,
    gradient_residual,
    solve_gradient_condition,
    verify_current_identity,
    verify_fd_relation,
)
from kpzlattice.lattice import (
    GibbsSpec,
    LocalFunction,
    RateTable,
    metropolis,
    nearest_neighbor,
    speed_change,
    speed_change_omega,
    ssep,
)
from kpzlattice.thermodynamics import uniform_grid

ETA0 = LocalFunction.occupation(0)


def random_rate(seed, r=1):
    rng = np.random.default_rng(seed)
    idx = np.arange(1 << (2 * r + 2))
    exch = ((idx >> r) & 1) != ((idx >> (r + 1)) & 1)
    return RateTable(r, np.where(exch, rng.uniform(0.1, 1.0, idx.size), 0.0))


# ---------------------------------------------------------------- detailed balance

def test_detailed_balance_ssep():
    assert check_detailed_balance(ssep(), GibbsSpec()) == 0.0


@pytest.mark.parametrize("b", [0.3, -0.2])
def test_detailed_balance_speed_change(b):
    assert check_detailed_balance(speed_change(b), GibbsSpec()) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_detailed_balance_metropolis_random_spec(seed):
    rng = np.random.default_rng(seed)
    spec = GibbsSpec((((0, 1), rng.normal()), ((0, 2), rng.normal()), ((0, 1, 2), rng.normal())),
                     rng.uniform(0.1, 2.0))
    assert check_detailed_balance(metropolis(spec), spec) <= 1e-15


def test_detailed_balance_fails_for_wrong_measure():
    assert check_detailed_balance(ssep(), nearest_neighbor(1.0, 0.7)) > 0.1


# ---------------------------------------------------------------- gradient condition

def test_ssep_omega_is_occupation():
    sol = solve_gradient_condition(ssep())
    assert sol.residual <= 1e-12
    assert sol.omega.allclose(ETA0, atol=1e-12)
    assert sol.status == "exact"


@pytest.mark.parametrize("b", [0.3, -0.3, 0.45])
def test_speed_change_omega_closed_form(b):
    c = speed_change(b)
    sol = solve_gradient_condition(c)
    assert sol.residual <= 1e-12
    expected = speed_change_omega(b) * c.scale
    assert sol.omega.allclose(expected, atol=1e-12)


@pytest.mark.parametrize("b", [0.3, -0.1])
def test_speed_change_omega_by_substitution(b):
    """Plug the closed form into the defining equation, config by config."""
    c = speed_change(b)
    for occ in itertools.product([0, 1], repeat=6):
        # sites -2..3 at positions 0..5
        def at(x):
            return occ[x + 2]

        def omega(x):
            return at(x) + b * (at(x - 1) * at(x) + at(x) * at(x + 1) - at(x - 1) * at(x + 1))

        raw = 0.0 if at(0) == at(1) else 1.0 + b * (at(-1) + at(2))
        assert raw * (at(0) - at(1)) == pytest.approx(omega(0) - omega(1), abs=1e-14)
    assert gradient_residual(c, speed_change_omega(b) * c.scale) <= 1e-12


def test_metropolis_is_not_gradient():
    sol = solve_gradient_condition(metropolis(nearest_neighbor(1.0, 0.7)))
    assert sol.residual > 1e-3
    assert sol.status == "fails"


def test_metropolis_residual_matches_normal_equations():
    c = metropolis(nearest_neighbor(1.0, 0.7))
    K = c.radius + 1
    A = _gradient_matrix(K)[:, 1:]   # drop the constant column: the only kernel direction
    rhs = _gradient_rhs(c, K)
    x = np.linalg.solve(A.T @ A, A.T @ rhs)
    independent = np.max(np.abs(A @ x - rhs))
    assert solve_gradient_condition(c).residual == pytest.approx(independent, rel=1e-9)


def test_solver_is_idempotent_from_its_own_output():
    c = speed_change(0.2)
    sol = solve_gradient_condition(c)
    again = solve_gradient_condition(c, initial=sol.omega)
    assert again.omega.allclose(sol.omega, atol=1e-13)


def test_gauge_constant_does_not_change_residual():
    c = speed_change(0.2)
    sol = solve_gradient_condition(c)
    shifted = sol.omega + 3.7
    assert gradient_residual(c, shifted) == pytest.approx(sol.residual, abs=1e-12)
    refined = solve_gradient_condition(c, initial=shifted)
    assert refined.omega.coefficients[0] == 0.0
    assert refined.omega.allclose(sol.omega, atol=1e-12)


def test_solver_residual_is_reproducible_independently():
    c = random_rate(4)
    sol = solve_gradient_condition(c)
    assert gradient_residual(c, sol.omega) == pytest.approx(sol.residual, abs=1e-15)


def test_solver_rejects_small_window():
    with pytest.raises(ValueError):
        solve_gradient_condition(speed_change(0.1), K=0)


def test_classification_bands():
    assert classify(1e-12) == "exact"
    assert classify(1e-8) == "suspicious"
    assert classify(1e-3) == "fails"


# ---------------------------------------------------------------- current identity

def test_current_identity_ssep():
    assert verify_current_identity(ssep(), ETA0) == 0.0


@pytest.mark.parametrize("b", [0.3, -0.4])
def test_current_identity_speed_change(b):
    c = speed_change(b)
    assert verify_current_identity(c, solve_gradient_condition(c).omega) <= 1e-12


@pytest.mark.parametrize("seed", range(4))
def test_current_identity_defect_is_half_the_gradient_defect(seed):
    c = random_rate(seed)
    sol = solve_gradient_condition(c)
    assert sol.residual > 1e-3   # a generic rate is not gradient
    lhs, rhs = _current_identity_sides(c, sol.omega)
    K = max(c.radius, -sol.omega.lo, sol.omega.hi)
    grad_defect = _gradient_matrix(K) @ sol.omega.extend(-K, K).coefficients - _gradient_rhs(c, K)
    assert np.allclose(lhs - rhs, 0.5 * grad_defect, atol=1e-13)
    assert verify_current_identity(c, sol.omega) == pytest.approx(0.5 * sol.residual, abs=1e-13)


# ---------------------------------------------------------------- fluctuation-dissipation

def test_fd_relation_ssep_half_filling():
    (row,) = verify_fd_relation(ssep(), ETA0, GibbsSpec(), [0.5])
    assert row.activity == pytest.approx(0.5, abs=1e-15)
    assert row.two_chi_d == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("b", [0.3, -0.2])
def test_fd_relation_speed_change_polynomial(b):
    c = speed_change(b)
    omega = solve_gradient_condition(c).omega
    for row in verify_fd_relation(c, omega, GibbsSpec(), uniform_grid(19)):
        rho = row.rho
        expected = 2 * rho * (1 - rho) * (1 + 2 * b * rho) * c.scale
        assert row.activity == pytest.approx(expected, abs=1e-13)
        assert row.two_chi_d == pytest.approx(expected, abs=1e-13)


def test_fd_relation_vanishes_at_empty_lattice():
    (row,) = verify_fd_relation(ssep(), ETA0, GibbsSpec(), [1e-9])
    assert row.activity < 1e-8 and row.two_chi_d < 1e-8


# ---------------------------------------------------------------- rate design

def test_designer_recovers_ssep():
    cert = design_gradient_rate(GibbsSpec(), r=0)
    assert cert.feasible
    assert np.allclose(cert.rate.table, ssep().table, atol=1e-9)
    assert cert.max_violation <= 1e-9


def test_designer_feasible_set_contains_speed_change():
    lp = _DesignLP(GibbsSpec(), r=2, K=3)
    for b in (0.3, -0.3):
        c = speed_change(b)
        x = np.concatenate([c.on_window(-2, 3), (speed_change_omega(b) * c.scale).extend(-3, 3).coefficients])
        assert lp.violation(x, 1e-6, 1.0) <= 1e-12
    cert = design_gradient_rate(GibbsSpec(), r=2, K=3)
    assert cert.feasible and cert.max_violation <= 1e-9
    assert cert.gradient.residual <= 1e-9
    assert check_detailed_balance(cert.rate, GibbsSpec()) <= 1e-9


def test_designer_interacting_spec():
    spec = nearest_neighbor(1.0, 0.7)
    cert = design_gradient_rate(spec, r=1, K=2)
    assert cert.feasible
    assert check_detailed_balance(cert.rate, spec) <= 1e-9
    assert gradient_residual(cert.rate, cert.gradient.omega, 2) <= 1e-9


def test_designer_contradictory_bounds():
    cert = design_gradient_rate(GibbsSpec(), r=0, lower=0.8, upper=0.2)
    assert not cert.feasible
    assert cert.witness["kind"] == "bound"
    assert cert.to_json()["status"] == "infeasible"


def test_designer_infeasible_window_gives_farkas_witness():
    # a rate that only sees the bond cannot compensate the neighbour energy
    cert = design_gradient_rate(nearest_neighbor(1.0, 0.7), r=0, K=1)
    assert not cert.feasible
    assert cert.witness["kind"] == "farkas"
    assert cert.witness["phase_one_objective"] > 0
    assert cert.witness["combination"]


def test_designer_window_limits():
    with pytest.raises(ValueError):
        design_gradient_rate(GibbsSpec(), r=3)


# ---------------------------------------------------------------- generator checks on small rings

def _generator(c, L):
    cfg = np.arange(1 << L)
    occ = ((cfg[:, None] >> np.arange(L)) & 1).astype(np.uint8)
    Q = np.zeros((cfg.size, cfg.size))
    for x in range(L):
        y = (x + 1) % L
        rate = c(occ, x)
        target = cfg ^ ((occ[:, x] ^ occ[:, y]).astype(np.int64) * ((1 << x) | (1 << y)))
        Q[cfg, target] += rate
    Q[cfg, cfg] -= Q.sum(axis=1)
    return Q, occ


@pytest.mark.parametrize("rate,spec", [(ssep(), GibbsSpec()), (speed_change(0.3), GibbsSpec()),
                                       (metropolis(nearest_neighbor(1.0, 0.7)), nearest_neighbor(1.0, 0.7))])
def test_symmetric_generator_is_self_adjoint(rate, spec):
    L = 8
    Q, occ = _generator(rate, L)
    logpi = np.array([-spec.beta * spec.ring_energy(o) for o in occ])
    pi = np.exp(logpi - logpi.max())
    flux = pi[:, None] * Q
    assert np.allclose(flux, flux.T, atol=1e-14)


@pytest.mark.parametrize("rate", [ssep(), speed_change(0.3)])
def test_asymmetric_gradient_dynamics_keep_product_measure(rate):
    assert generator_invariance_residual(rate.asymmetrized(0.3), GibbsSpec(), 10) <= 1e-10


def test_asymmetric_metropolis_breaks_invariance():
    spec = nearest_neighbor(1.0, 0.7)
    assert generator_invariance_residual(metropolis(spec).asymmetrized(0.3), spec, 10) > 1e-6
    assert generator_invariance_residual(metropolis(spec), spec, 10) <= 1e-12


def test_invariance_residual_agrees_with_dense_generator():
    c = speed_change(0.2).asymmetrized(0.5)
    spec = GibbsSpec()
    Q, _ = _generator(c, 6)
    assert np.max(np.abs(np.ones(64) @ Q)) == pytest.approx(generator_invariance_residual(c, spec, 6), abs=1e-14)
