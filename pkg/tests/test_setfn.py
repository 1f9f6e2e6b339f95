"""Set-function evaluation: prefix sweep, literal recursion and LP support values."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_params
from gflex import setfn
from gflex.aggregate import AggregateOracle
from gflex.core_model import DeviceParams, ValidationError, build_fixed_load, build_generation
from gflex.refcheck import support_lp
from gflex.setfn import (IndividualOracle, StackedOracle, TableOracle, all_masks, as_mask,
                         check_paramodular, eval_individual, eval_naive, subsets, tabulate)


@pytest.mark.parametrize("A, expected", [
    ({1}, (0, 1)),
    ({1, 2, 3}, (2, 2)),
    (set(), (0, 0)),
    ({3}, (0, 1)),
])
def test_e1_values(e1, A, expected):
    assert eval_individual(e1, A) == pytest.approx(expected, abs=1e-12)


def test_e1_naive_matches_sweep_on_all_subsets(e1):
    for A in subsets(3):
        assert eval_naive(e1, A) == pytest.approx(eval_individual(e1, A), abs=1e-12)


def test_generation_naive():
    g = build_generation([1, 1])
    assert eval_naive(g, {1, 2}) == (-2, 0)
    assert eval_naive(g, set()) == (0, 0)


def test_as_mask_forms():
    np.testing.assert_array_equal(as_mask({1, 3}, 3), [True, False, True])
    np.testing.assert_array_equal(as_mask([True, False], 2), [True, False])
    with pytest.raises(ValueError):
        as_mask({4}, 3)
    assert all_masks(3).shape == (8, 3)
    assert len(list(subsets(4))) == 16


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2 ** 31), T=st.integers(1, 6))
def test_sweep_equals_recursion(seed, T):
    params = random_params(np.random.default_rng(seed), T)
    fast_p, fast_b = IndividualOracle(params).eval_many(all_masks(T))
    for i, A in enumerate(all_masks(T)):
        p, b = eval_naive(params, A)
        assert fast_p[i] == pytest.approx(p, abs=1e-12)
        assert fast_b[i] == pytest.approx(b, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31), T=st.integers(1, 4))
def test_values_are_lp_support(seed, T):
    params = random_params(np.random.default_rng(seed), T)
    oracle = IndividualOracle(params)
    for A in subsets(T):
        p, b = oracle.eval(A)
        for value, sense in ((p, "min"), (b, "max")):
            ref = support_lp(params, A, sense)
            if np.isinf(value):
                assert np.isinf(ref) or abs(ref) > 1e6
            else:
                assert value == pytest.approx(ref, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 31), T=st.integers(1, 5))
def test_modular_bounds_and_paramodularity(seed, T):
    params = random_params(np.random.default_rng(seed), T)
    oracle = IndividualOracle(params)
    p, b = tabulate(oracle)
    masks = all_masks(T).astype(float)
    assert (p >= masks @ params.u_lo - 1e-12).all()
    assert (b <= masks @ params.u_hi + 1e-12).all()
    assert check_paramodular(oracle)


def test_e1_paramodular(e1):
    assert check_paramodular(IndividualOracle(e1))


def test_non_submodular_table_fails():
    # b({1}) = b({2}) = 0 but b({1,2}) = 1
    assert not check_paramodular(TableOracle([0, 0, 0, 0], [0, 0, 0, 1]))


def test_unnormalized_table_fails():
    assert not check_paramodular(TableOracle([1, 1], [1, 1]))


def test_aggregate_of_three_is_paramodular():
    rng = np.random.default_rng(2)
    oracle = AggregateOracle([IndividualOracle(random_params(rng, 4)) for _ in range(3)])
    assert check_paramodular(oracle)


def test_check_paramodular_guards():
    with pytest.raises(ValueError):
        check_paramodular(IndividualOracle(build_fixed_load(np.zeros(13))))
    with pytest.raises(ValueError):
        check_paramodular(IndividualOracle(build_fixed_load([1, 2])), T=3)


def test_infinite_bounds_saturate():
    g = build_generation([2, 1, 3])
    p, b = tabulate(IndividualOracle(g))
    assert np.isfinite(p).all() and np.isfinite(b).all()
    masks = all_masks(3).astype(float)
    np.testing.assert_array_equal(p, masks @ g.u_lo)
    np.testing.assert_array_equal(b, np.zeros(8))


def test_stacked_members_match_individuals():
    rng = np.random.default_rng(8)
    params = [random_params(rng, 5) for _ in range(6)]
    stacked = StackedOracle(params)
    masks = all_masks(5)
    P, B = stacked.eval_members(masks)
    for i, prm in enumerate(params):
        p, b = IndividualOracle(prm).eval_many(masks)
        np.testing.assert_array_equal(P[:, i], p)
        np.testing.assert_array_equal(B[:, i], b)


def test_per_member_masks():
    rng = np.random.default_rng(9)
    params = [random_params(rng, 4) for _ in range(3)]
    stacked = StackedOracle(params)
    masks = rng.random((7, 3, 4)) < 0.5
    P, B = stacked.eval_members(masks)
    for i, prm in enumerate(params):
        p, b = IndividualOracle(prm).eval_many(masks[:, i])
        np.testing.assert_array_equal(P[:, i], p)
        np.testing.assert_array_equal(B[:, i], b)


def test_stacked_rejects_mismatch_and_invalid():
    with pytest.raises(ValidationError):
        StackedOracle([build_fixed_load([1]), build_fixed_load([1, 2])])
    bad = DeviceParams([0, 0], [1, 1], [3, 3], [4, 4])
    with pytest.raises(ValidationError):
        IndividualOracle(bad)
    with pytest.raises(ValueError):
        StackedOracle([])


@pytest.mark.skipif(not setfn.JIT_ENABLED, reason="numba kernels disabled")
def test_compiled_sweep_is_bitwise_equal_to_numpy():
    rng = np.random.default_rng(4)
    for _ in range(50):
        T = int(rng.integers(1, 12))
        N = int(rng.integers(1, 6))
        stacked = StackedOracle([random_params(rng, T) for _ in range(N)])
        masks = rng.random((9, T)) < 0.5
        args = (stacked.u_lo, stacked.u_hi, stacked.x_lo, stacked.x_hi)
        fast = setfn.prefix_sweep(*args, masks)
        ref = setfn._sweep_numpy(*args, masks)
        for x, y in zip(fast, ref):
            assert np.array_equal(x, y)
