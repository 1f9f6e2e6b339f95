"""Summed oracles and the bucketed charging-only EV fleet."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_charging_spec, random_ev_spec, random_population
from gflex.aggregate import (AggregateOracle, EVFleetOracle, build_ev_fleet, eval_aggregate,
                             eval_ev_fleet, ev_closed_form, ev_device, ev_extremal_profiles,
                             is_fleet_ev, population_oracle)
from gflex.core_model import Population, ValidationError, build_ev, build_fixed_load
from gflex.refcheck import support_lp
from gflex.setfn import IndividualOracle, all_masks, eval_individual, subsets, tabulate

E1_SPEC = dict(a=1, d=3, m_lo=0, m_hi=1, e0=0, cap=2, e_lo=2, e_hi=2)


def test_two_copies_double(e1):
    oracles = [IndividualOracle(e1), IndividualOracle(e1)]
    assert eval_aggregate(oracles, {1, 2, 3}) == (4, 4)


def test_singleton_sum_is_individual(e1):
    for A in subsets(3):
        assert eval_aggregate([IndividualOracle(e1)], A) == eval_individual(e1, A)


def test_ev_plus_load(e1):
    oracles = [IndividualOracle(e1), IndividualOracle(build_fixed_load([1, 1, 1]))]
    assert eval_aggregate(oracles, {2}) == pytest.approx((1, 2))


def test_aggregate_rejects_mismatch(e1):
    with pytest.raises(ValidationError):
        AggregateOracle([IndividualOracle(e1), IndividualOracle(build_fixed_load([1]))])
    with pytest.raises(ValueError):
        AggregateOracle([])
    p, b = AggregateOracle([], T=2).eval({1})
    assert (p, b) == (0, 0)


def test_duplicating_doubles_exactly():
    # quarter-unit data keeps every sum exact
    rng = np.random.default_rng(1)
    members = [IndividualOracle(build_ev(T=4, **random_ev_spec(rng, 4, dyadic=True)))
               for _ in range(4)]
    p1, b1 = tabulate(AggregateOracle(members))
    p2, b2 = tabulate(AggregateOracle(members + members))
    np.testing.assert_array_equal(p2, 2 * p1)
    np.testing.assert_array_equal(b2, 2 * b1)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 31), T=st.integers(1, 3), N=st.integers(1, 3))
def test_sum_equals_population_support(seed, T, N):
    pop = random_population(np.random.default_rng(seed), T, N)
    oracle = population_oracle(pop, ev_fleet=False)
    for A in subsets(T):
        p, b = oracle.eval(A)
        assert p == pytest.approx(support_lp(pop.params, A, "min"), abs=1e-9)
        assert b == pytest.approx(support_lp(pop.params, A, "max"), abs=1e-9)


# -- EV fleet -------------------------------------------------------------------

def test_extremal_profiles_e1():
    late, early = ev_extremal_profiles(E1_SPEC)
    np.testing.assert_array_equal(late, [0, 1, 1])
    np.testing.assert_array_equal(early, [1, 1, 0])


def test_extremal_profiles_with_remainder():
    spec = dict(a=2, d=5, m_lo=0, m_hi=2, e0=1, cap=10, e_lo=6, e_hi=8)
    late, early = ev_extremal_profiles(spec)
    np.testing.assert_array_equal(late, [0, 1, 2, 2])
    np.testing.assert_array_equal(early, [2, 2, 2, 1])


def test_fleet_single_ev_values():
    fleet = build_ev_fleet([E1_SPEC], T=3)
    assert eval_ev_fleet(fleet, {2}) == (0, 1)
    assert eval_ev_fleet(fleet, set()) == (0, 0)
    assert eval_ev_fleet(fleet, {1, 2, 3}) == (2, 2)


def test_closed_form_single_ev():
    assert ev_closed_form(E1_SPEC, {2}, 3) == (0, 1)
    assert ev_closed_form(E1_SPEC, {1, 2}, 3) == (1, 2)


def test_empty_fleet():
    fleet = build_ev_fleet([], T=4)
    p, b = tabulate(fleet)
    assert not p.any() and not b.any()


def test_two_identical_evs_double_bucket():
    fleet = build_ev_fleet([E1_SPEC, E1_SPEC], T=3)
    late, early = fleet.buckets[(1, 3)]
    np.testing.assert_array_equal(late, [0, 2, 2])
    np.testing.assert_array_equal(early, [2, 2, 0])


def test_fleet_size_independent_of_count():
    rng = np.random.default_rng(0)
    specs = [random_charging_spec(rng, 6) for _ in range(200)]
    fleet = build_ev_fleet(specs, T=6)
    assert len(fleet.buckets) <= 6 * 7 // 2


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 31), T=st.integers(1, 6), N=st.integers(0, 6))
def test_fleet_matches_generic_sum(seed, T, N):
    rng = np.random.default_rng(seed)
    devices = [ev_device(f"ev{i}", T, **random_charging_spec(rng, T)) for i in range(N)]
    pop = Population(T, tuple(devices))
    fleet = build_ev_fleet(pop)
    generic = AggregateOracle([IndividualOracle(d.params) for d in devices], T=T)
    fp, fb = tabulate(fleet)
    gp, gb = tabulate(generic)
    np.testing.assert_allclose(fp, gp, rtol=0, atol=1e-12)
    np.testing.assert_allclose(fb, gb, rtol=0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 31), T=st.integers(1, 6))
def test_closed_form_matches_sweep(seed, T):
    spec = random_ev_spec(np.random.default_rng(seed), T, v2g=False)
    params = build_ev(T=T, **spec)
    oracle = IndividualOracle(params)
    for A in all_masks(T):
        assert ev_closed_form(spec, A, T) == pytest.approx(oracle.eval(A), abs=1e-12)


def test_fleet_rejects_v2g_and_bad_windows():
    with pytest.raises(ValidationError):
        build_ev_fleet([dict(E1_SPEC, m_lo=-1)], T=3)
    with pytest.raises(ValidationError):
        build_ev_fleet([dict(E1_SPEC, d=4)], T=3)
    with pytest.raises(ValidationError):
        build_ev_fleet([dict(E1_SPEC, e_lo=5, e_hi=5, cap=6)], T=3)
    pop = Population(3, (ev_device("a", 3, **E1_SPEC),))
    assert is_fleet_ev(pop.devices[0])
    assert not is_fleet_ev(ev_device("b", 3, **dict(E1_SPEC, m_lo=-1)))


def test_population_oracle_routes_fleet():
    rng = np.random.default_rng(4)
    pop = random_population(rng, 4, 8)
    fast = population_oracle(pop)
    slow = population_oracle(pop, ev_fleet=False)
    fp, fb = tabulate(fast)
    sp, sb = tabulate(slow)
    np.testing.assert_allclose(fp, sp, atol=1e-12)
    np.testing.assert_allclose(fb, sb, atol=1e-12)
    only_fleet = Population(3, (ev_device("a", 3, **E1_SPEC),))
    assert isinstance(population_oracle(only_fleet), EVFleetOracle)
