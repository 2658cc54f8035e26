import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kpzlattice.lattice import (
    GibbsSpec,
    LocalFunction,
    RateTable,
    RingConfiguration,
    builtin_rate,
    evaluate_local,
    exchange,
    hamiltonian_exchange_delta,
    metropolis,
    nearest_neighbor,
    speed_change,
    speed_change_omega,
    ssep,
)

rings = st.lists(st.integers(0, 1), min_size=2, max_size=24)


def brute_force_delta(spec, occ, x):
    eta = RingConfiguration(occ)
    return spec.ring_energy(exchange(eta, x)) - spec.ring_energy(eta)


# ---------------------------------------------------------------- configurations

def test_occupancies_are_binary():
    with pytest.raises(ValueError):
        RingConfiguration([0, 2, 1])


def test_exchange_example():
    assert exchange(RingConfiguration([1, 0, 0]), 0) == RingConfiguration([0, 1, 0])


def test_exchange_wraps_around_the_ring():
    assert exchange(RingConfiguration([1, 0, 0]), 2) == RingConfiguration([0, 0, 1])


def test_exchange_rejects_bad_bond():
    with pytest.raises(ValueError):
        exchange(RingConfiguration([1, 0, 0]), 3)


@given(rings, st.data())
def test_exchange_is_an_involution_and_conserves(occ, data):
    eta = RingConfiguration(occ)
    x = data.draw(st.integers(0, len(occ) - 1))
    once = exchange(eta, x)
    assert once.particle_count == eta.particle_count == sum(occ)
    assert exchange(once, x) == eta


def test_exchange_does_not_mutate_input():
    eta = RingConfiguration([1, 0, 1, 1])
    exchange(eta, 0)
    assert eta == RingConfiguration([1, 0, 1, 1])


# ---------------------------------------------------------------- local functions

def test_single_site_function_reads_the_shifted_site():
    eta = RingConfiguration([0, 1, 1, 0, 1, 0])
    f = LocalFunction.occupation(0)
    for x in range(6):
        assert f(eta, x) == eta[x]
    assert f(eta, 3) == 0.0


def test_pair_function_on_all_ones():
    f = LocalFunction.from_terms({(0, 1): 1.0})
    eta = RingConfiguration([1] * 7)
    assert all(f(eta, x) == 1.0 for x in range(7))


def test_speed_change_omega_by_substitution():
    b = 0.3
    omega = speed_change_omega(b)
    occ = [1, 0] * 5
    eta = RingConfiguration(occ)
    for x in range(10):
        m, z, p = occ[(x - 1) % 10], occ[x], occ[(x + 1) % 10]
        expected = z + b * (m * z + z * p - m * p)
        assert omega(eta, x) == pytest.approx(expected, abs=1e-15)


@given(rings, st.integers(-3, 3), st.data())
def test_shift_covariance(occ, z, data):
    f = LocalFunction.from_terms({(0, 1): 0.7, (2,): -1.3, (): 0.2})
    if len(occ) < f.width + abs(z) + 1:
        return
    x = data.draw(st.integers(0, len(occ) - 1))
    assert f.shift(z)(occ, x) == pytest.approx(f(occ, x + z), abs=1e-14)
    assert np.array_equal(f.shift(z).coefficients, f.coefficients)


@given(rings, st.floats(-5, 5), st.floats(-5, 5))
def test_linearity(occ, a, b):
    f = LocalFunction.from_terms({(0, 1): 1.0, (1,): 2.0})
    g = LocalFunction.from_terms({(-1, 2): -0.5, (0,): 1.0})
    if len(occ) < 4:
        return
    h = a * f + b * g
    for x in range(len(occ)):
        assert h(occ, x) == pytest.approx(a * f(occ, x) + b * g(occ, x), abs=1e-12)


@settings(max_examples=50)
@given(st.lists(st.integers(0, 1), min_size=12, max_size=12), st.integers(0, 11), st.integers(0, 1))
def test_value_ignores_sites_outside_window(occ, site, flip):
    f = LocalFunction.from_terms({(0, 1): 1.0, (-1, 2): 3.0})
    x = 5
    if (site - x) % 12 in (11, 0, 1, 2):
        return
    perturbed = list(occ)
    perturbed[site] ^= flip
    assert f(occ, x) == f(perturbed, x)


def test_values_and_coefficients_round_trip():
    rng = np.random.default_rng(0)
    vals = rng.normal(size=16)
    f = LocalFunction.from_values(-1, 2, vals)
    assert np.allclose(f.values(), vals, atol=1e-13)


def test_extend_preserves_values():
    f = LocalFunction.from_terms({(0, 1): 2.0, (): 1.0})
    g = f.extend(-2, 3)
    rng = np.random.default_rng(1)
    occ = rng.integers(0, 2, size=20)
    assert np.allclose(evaluate_local(f, occ, np.arange(20)), evaluate_local(g, occ, np.arange(20)))


def test_local_function_json_round_trip():
    f = LocalFunction.from_terms({(0, 1): 2.5, (-1,): -1.0})
    g = LocalFunction.from_json(json.loads(json.dumps(f.to_json())))
    assert (g.lo, g.hi) == (f.lo, f.hi)
    assert np.array_equal(g.coefficients, f.coefficients)


def test_batched_evaluation_matches_scalar():
    f = speed_change_omega(0.2)
    rng = np.random.default_rng(2)
    occ = rng.integers(0, 2, size=(5, 9))
    batched = evaluate_local(f, occ, 4)
    assert batched.shape == (5,)
    assert np.allclose(batched, [f(row, 4) for row in occ])


# ---------------------------------------------------------------- Gibbs specs and energy changes

def test_patterns_are_normalized_and_merged():
    spec = GibbsSpec((((2, 3), 1.0), ((0, 1), 0.5)), 1.0)
    assert spec.couplings == (((0, 1), 1.5),)
    assert spec.range == 1


def test_exchange_delta_is_zero_for_equal_sites():
    spec = nearest_neighbor(1.3, 2.0)
    eta = RingConfiguration([1, 1, 0, 0, 1])
    assert hamiltonian_exchange_delta(spec, eta, 0) == 0.0
    assert hamiltonian_exchange_delta(spec, eta, 2) == 0.0


def test_exchange_delta_alternating_ring_by_enumeration():
    spec = nearest_neighbor(1.0, 1.0)
    occ = [1, 0, 1, 0]
    for x in range(4):
        d = hamiltonian_exchange_delta(spec, RingConfiguration(occ), x)
        assert d == brute_force_delta(spec, occ, x)
        # moving a particle next to its neighbour creates one bond
        assert d == 1.0


def test_empty_potential_gives_zero_delta():
    spec = GibbsSpec()
    for occ in itertools.product([0, 1], repeat=5):
        for x in range(5):
            assert hamiltonian_exchange_delta(spec, RingConfiguration(occ), x) == 0.0


@pytest.mark.parametrize("L", [4, 6, 8])
def test_exchange_delta_matches_full_sum_on_small_rings(L):
    spec = GibbsSpec((((0, 1), 1.0), ((0, 2), -0.4), ((0, 1, 3), 0.7)), 0.5)
    for occ in itertools.product([0, 1], repeat=L):
        for x in range(L):
            assert hamiltonian_exchange_delta(spec, RingConfiguration(occ), x) == pytest.approx(
                brute_force_delta(spec, occ, x), abs=1e-12)


def test_gibbs_spec_json_round_trip():
    spec = GibbsSpec((((0, 2), -0.4), ((0, 1), 1.0)), 0.7, 0.1)
    assert GibbsSpec.from_json(json.loads(json.dumps(spec.to_json()))) == spec


def test_flipped_potential_expands_the_hole_product():
    # (1 - eta0)(1 - eta1) = 1 - eta0 - eta1 + eta0 eta1 -> field -2J per site, pair J
    flipped = nearest_neighbor(1.0, 1.0, phi=0.3).flipped()
    assert flipped.couplings == (((0,), -2.0), ((0, 1), 1.0))
    assert flipped.phi == -0.3
    assert GibbsSpec().is_particle_hole_symmetric
    assert not nearest_neighbor(1.0, 1.0).is_particle_hole_symmetric


# ---------------------------------------------------------------- rate tables

def test_ssep_exclusion():
    c = ssep()
    assert c(RingConfiguration([1, 1, 0, 0]), 0) == 0.0
    assert c(RingConfiguration([1, 0, 0, 0]), 0) == 1.0


@pytest.mark.parametrize("b", [0.3, -0.3, 0.1])
def test_speed_change_isolated_pair(b):
    c = speed_change(b)
    # eta(-1) = eta(2) = 0, eta(0) != eta(1)
    eta = RingConfiguration([1, 0, 0, 0, 0, 0])
    assert c(eta, 0) == pytest.approx(1.0 / (1.0 + 2.0 * abs(b)), abs=1e-15)


def test_speed_change_rejects_large_b():
    with pytest.raises(ValueError):
        speed_change(0.5)


def test_metropolis_at_infinite_temperature_is_ssep():
    c = metropolis(nearest_neighbor(1.0, 0.0))
    assert np.array_equal(c.on_window(-1, 2), ssep().on_window(-1, 2))


def test_metropolis_range_follows_the_potential():
    assert metropolis(GibbsSpec((((0, 2), 1.0),), 0.3)).radius == 2


@pytest.mark.parametrize("family,kwargs", [("ssep", {}), ("speed_change", {"b": 0.2}),
                                           ("metropolis", {"spec": nearest_neighbor(1.0, 0.7)})])
def test_rate_table_invariants(family, kwargs):
    c = builtin_rate(family, **kwargs)
    r = c.radius
    idx = np.arange(c.table.size)
    same = ((idx >> r) & 1) == ((idx >> (r + 1)) & 1)
    assert np.all(c.table[same] == 0.0)
    assert np.all(c.table[~same] > 0.0)
    assert np.all(c.table <= 1.0)


def test_asymmetrized_rate_pointwise():
    c = speed_change(0.3).asymmetrized(0.4)
    rng = np.random.default_rng(3)
    for _ in range(50):
        occ = rng.integers(0, 2, size=8)
        for x in range(8):
            base = speed_change(0.3)(occ, x)
            expected = base * (1 - 0.4 * occ[(x + 1) % 8] * (1 - occ[x]))
            assert c(occ, x) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("table", [
    [0.0, 1.0, 1.0, 0.5],   # exclusion rule
    [0.0, 0.0, 1.0, 0.0],   # ergodicity
    [0.0, 1.5, 1.0, 0.0],   # bound
])
def test_invalid_tables_are_rejected(table):
    with pytest.raises(ValueError):
        RateTable(0, np.array(table))


def test_gamma_outside_unit_interval_is_rejected():
    with pytest.raises(ValueError):
        ssep().asymmetrized(1.5)


def test_rate_table_json_round_trip():
    c = metropolis(nearest_neighbor(1.0, 0.7)).asymmetrized(0.2)
    d = RateTable.from_json(json.loads(c.dumps()))
    assert np.array_equal(d.table, c.table)
    assert d.gamma == c.gamma and d.spec == c.spec and d.radius == c.radius


def test_unknown_family():
    with pytest.raises(ValueError):
        builtin_rate("glauber")
