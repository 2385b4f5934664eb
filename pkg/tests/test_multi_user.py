import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macopt.battery import DischargeModel, UserParams
from macopt.exceptions import PreconditionViolated, TooManyUsers
from macopt.multi_user import (MultiUserInstance, active_phase_profile, enumerate_phases,
                               hybrid_sum_rate_multi, is_consecutive_profile,
                               noma_allocation_multi, noma_sum_rate_multi, phases_by_cardinality,
                               subset_rate_bound, tdma_allocation_multi, tdma_sum_rate_multi,
                               theorem1_witness)
from macopt.two_user import TwoUserInstance, hybrid_sum_rate, noma_sum_rate, tdma_sum_rate

from .conftest import LN2, ref_user

users = st.builds(
    lambda B, g, r: UserParams(B, g, DischargeModel.quadratic(r)),
    st.floats(0.3, 3.0), st.floats(0.0, 0.9), st.floats(0.0, 1.0))


@pytest.mark.parametrize("r, noma, tdma, hybrid", [
    (0.0, 1.700440, 2.087463, 2.087463),
    (0.3, 1.392317, None, 1.491853),
    (0.6, 1.000000, 0.523562, 1.004269),
    (1.0, None, 0.087463, 0.247928),
])
def test_three_user_reference_rows(r, noma, tdma, hybrid):
    inst = MultiUserInstance.identical(3, ref_user(r))
    if noma is not None:
        assert noma_sum_rate_multi(inst) / LN2 == pytest.approx(noma, abs=1e-6)
    if tdma is not None:
        assert tdma_sum_rate_multi(inst)[0] / LN2 == pytest.approx(tdma, abs=1e-6)
    h, alloc, rep = hybrid_sum_rate_multi(inst)
    assert rep.ok
    assert h / LN2 == pytest.approx(hybrid, abs=1e-5)
    alloc.check(inst.users, 1.0, tol=1e-7)


def test_phase_enumeration():
    phases = enumerate_phases(3)
    assert len(phases) == 8
    groups = phases_by_cardinality(phases)
    assert [len(groups[k]) for k in range(4)] == [1, 3, 3, 1]
    with pytest.raises(TooManyUsers):
        enumerate_phases(9)


@settings(max_examples=8)
@given(users, users)
def test_two_users_match_dedicated_solver(u1, u2):
    multi = MultiUserInstance((u1, u2), 1.0)
    pair = TwoUserInstance((u1, u2), 1.0)
    assert hybrid_sum_rate_multi(multi)[0] == pytest.approx(hybrid_sum_rate(pair)[0], abs=1e-7)
    assert noma_sum_rate_multi(multi) == pytest.approx(noma_sum_rate(pair)[0])
    assert tdma_sum_rate_multi(multi)[0] == pytest.approx(tdma_sum_rate(pair)[0], abs=1e-9)


@settings(max_examples=6)
@given(st.lists(users, min_size=3, max_size=3))
def test_three_user_dominance_and_structure(us):
    inst = MultiUserInstance(tuple(us), 1.0)
    h, alloc, rep = hybrid_sum_rate_multi(inst)
    assert rep.ok
    assert h >= noma_sum_rate_multi(inst) - 1e-6
    assert h >= tdma_sum_rate_multi(inst)[0] - 1e-6
    assert is_consecutive_profile(active_phase_profile(alloc, 1e-6))


@settings(max_examples=10)
@given(st.lists(users, min_size=3, max_size=3))
def test_subset_bound_monotone_and_subadditive(us):
    inst = MultiUserInstance(tuple(us), 1.0)
    alloc = noma_allocation_multi(inst)
    full = subset_rate_bound(alloc, [1, 2, 3])
    for k in (1, 2):
        for S in itertools.combinations([1, 2, 3], k):
            rest = [u for u in (1, 2, 3) if u not in S]
            assert subset_rate_bound(alloc, S) <= full + 1e-12
            assert full <= subset_rate_bound(alloc, S) + subset_rate_bound(alloc, rest) + 1e-12
    assert subset_rate_bound(alloc, []) == 0.0


@pytest.mark.parametrize("us", [
    # ideal zero-cost users: any schedule with constant total power is optimal
    [UserParams(1.0, 0.0, DischargeModel.ideal())] * 3,
    # two identical lossy users can trade phases freely
    [UserParams(1.0, 0.5, DischargeModel.ideal())]
    + [UserParams(1.0, 0.5, DischargeModel.quadratic(1.0))] * 2,
])
def test_degenerate_optimum_returns_structured_point(us):
    inst = MultiUserInstance(tuple(us), 1.0)
    h, alloc, rep = hybrid_sum_rate_multi(inst)
    assert rep.ok
    assert h >= noma_sum_rate_multi(inst) - 1e-9
    assert is_consecutive_profile(active_phase_profile(alloc, 1e-6))
    alloc.check(inst.users, 1.0, tol=1e-7)


def test_allocations_are_valid():
    inst = MultiUserInstance.identical(3, ref_user(0.3))
    noma_allocation_multi(inst).check(inst.users, 1.0)
    _, w = tdma_sum_rate_multi(inst)
    tdma_allocation_multi(inst, w).check(inst.users, 1.0)


@pytest.mark.parametrize("n", [2, 3])
def test_witness_ordering(n):
    tdma, noma, hybrid = theorem1_witness(n, 0.3, 0.5)
    assert (noma - tdma) / LN2 > 1e-4
    assert hybrid >= noma - 1e-7


def test_witness_precondition():
    with pytest.raises(PreconditionViolated):
        theorem1_witness(3, 1.25, 1.0)
