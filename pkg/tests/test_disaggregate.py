"""Per-device schedules from labeled aggregate solutions."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_population
from gflex.aggregate import population_oracle
from gflex.core_model import Device, Population, build_ess, check_membership
from gflex.disaggregate import disaggregate, verify_disaggregation
from gflex.optimize import (CouplingConstraints, greedy_lp, solve_lp_coupled,
                            vertex_from_permutation)
from gflex.scenarios import random_coupling
from gflex.setfn import IndividualOracle, StackedOracle


def e1_pair(e1, second=None):
    second = e1 if second is None else second
    return Population(3, (Device("a", "ev", e1), Device("b", "raw", second)))


def test_single_device_identity(e1):
    pop = Population(3, (Device("a", "ev", e1),))
    v = vertex_from_permutation(IndividualOracle(e1), (0, 2, 3, 1))
    res = disaggregate(pop, [(1.0, v)])
    np.testing.assert_array_equal(res.profiles[0], v.u)
    assert res.ok and res.ids == ["a"]


def test_two_copies_split_evenly(e1):
    pop = e1_pair(e1)
    sol = solve_lp_coupled(StackedOracle(pop.params), [3, 1, 2])
    np.testing.assert_array_equal(sol.u_star, [0, 2, 2])
    res = disaggregate(pop, sol.atoms)
    np.testing.assert_array_equal(res.profiles, [[0, 1, 1], [0, 1, 1]])


def test_coupled_ev_and_battery(e1):
    ess = build_ess(-1, 1, 1, 2, 3)
    pop = e1_pair(e1, ess)
    coupling = CouplingConstraints([[0, 1, 0]], [0.5])
    sol = solve_lp_coupled(StackedOracle(pop.params), [3, 1, 2], coupling)
    res = disaggregate(pop, sol.atoms, target=sol.u_star)
    assert res.residual <= 1e-9
    assert check_membership(e1, res.profiles[0]) and check_membership(ess, res.profiles[1])
    assert verify_disaggregation(pop, res, sol.u_star).ok


def test_labels_only_and_oracle_inputs(e1):
    pop = e1_pair(e1)
    res = disaggregate(pop.params, [(0.5, (0, 1, 2, 3)), (0.5, (1, 2, 3, 0))])
    assert res.ok
    oracles = [IndividualOracle(p) for p in pop.params]
    res2 = disaggregate(oracles, [(0.5, (0, 1, 2, 3)), (0.5, (1, 2, 3, 0))])
    np.testing.assert_array_equal(res.profiles, res2.profiles)


def test_bad_atoms(e1):
    pop = e1_pair(e1)
    with pytest.raises(ValueError):
        disaggregate(pop, [(0.7, (0, 1, 2, 3))])
    with pytest.raises(ValueError):
        disaggregate(pop, [(1.0, None)])
    with pytest.raises(ValueError):
        disaggregate(pop, [])
    with pytest.raises(ValueError):
        disaggregate([], [(1.0, (0, 1, 2, 3))])


def test_many_atoms_are_reduced(e1):
    pop = e1_pair(e1)
    labels = [(0, 1, 2, 3), (1, 2, 3, 0), (3, 2, 1, 0), (2, 0, 3, 1), (0, 3, 1, 2), (1, 0, 2, 3)]
    atoms = [(1 / 6, lab) for lab in labels]
    res = disaggregate(pop, atoms)
    assert len(res.atoms) <= 4
    assert res.ok


def test_verification_reports(e1):
    pop = e1_pair(e1)
    sol = greedy_lp(StackedOracle(pop.params), [3, 1, 2])
    res = disaggregate(pop, [(1.0, sol)])
    assert verify_disaggregation(pop, res, sol.u).violations == []
    tampered = res.profiles.copy()
    tampered[0, 0] += 0.1
    report = verify_disaggregation(pop, tampered, sol.u)
    kinds = {v["kind"] for v in report.violations}
    assert "residual" in kinds
    assert report.residual == pytest.approx(0.1)
    assert report.to_dict()["ok"] is False
    # keep the sum but push one device past its final SoC bound
    shifted = res.profiles.copy()
    shifted[0, 2] += 1e-6
    shifted[1, 2] -= 1e-6
    report = verify_disaggregation(pop, shifted, sol.u)
    assert [v["device_id"] for v in report.violations] == ["a", "b"]
    assert report.violations[0]["magnitude"] == pytest.approx(1e-6)
    with pytest.raises(ValueError):
        verify_disaggregation(pop, res.profiles[:1], sol.u)


def test_operation_count_is_linear():
    rng = np.random.default_rng(0)
    pop = random_population(rng, 4, 6)
    labels = [tuple(rng.permutation(5)) for _ in range(3)]
    one = disaggregate(pop, [(1.0, labels[0])]).oracle_evals
    three = disaggregate(pop, [(1 / 3, lab) for lab in labels]).oracle_evals
    assert three == 3 * one == 3 * 6 * 5


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31), T=st.integers(1, 6), N=st.integers(1, 8))
def test_coupled_solutions_disaggregate_exactly(seed, T, N):
    rng = np.random.default_rng(seed)
    pop = random_population(rng, T, N)
    oracle = population_oracle(pop)
    coupling = random_coupling(oracle, int(rng.integers(0, 4)), rng)  # feasible by construction
    sol = solve_lp_coupled(oracle, rng.normal(size=T), coupling)
    res = disaggregate(pop, sol.atoms, target=sol.u_star)
    assert res.residual <= 1e-9
    assert all(res.feasible)
    assert len(res.atoms) <= T + 1
