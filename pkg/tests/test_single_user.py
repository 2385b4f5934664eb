import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from macopt.battery import DischargeModel, UserParams, peak_discharge
from macopt.exceptions import OutOfInteriorRange
from macopt.single_user import (SingleUserProblem, WindowedRate, allocate_time_equal_marginal,
                                brute_force_p1, check_linearity_in_B, is_interior, rate_at,
                                solve_p2, stationarity_residual_p2)

users = st.builds(
    lambda B, g, r: UserParams(B, g, DischargeModel.quadratic(r)),
    st.floats(0.1, 5.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))


def test_ideal_interior_optimum():
    prob = SingleUserProblem(UserParams(1.25, 0.5, DischargeModel.ideal()), 1.0)
    sol = solve_p2(prob)
    # interior optimum of tau ln(1 + B/tau - gamma); a coarse root estimate gives ~0.757
    assert sol.duration == pytest.approx(0.75504, abs=1e-4)
    assert sol.duration == pytest.approx(0.757, abs=5e-3)
    assert stationarity_residual_p2(prob, sol.duration) < 1e-6


def test_zero_circuit_cost_uses_whole_frame():
    sol = solve_p2(SingleUserProblem(UserParams(1.0, 0.0, DischargeModel.quadratic(0.3)), 1.0))
    assert sol.duration == pytest.approx(1.0)


def test_infeasible_when_circuit_too_expensive():
    m = DischargeModel.quadratic(0.5)
    sol = solve_p2(SingleUserProblem(UserParams(1.0, 5.0, m), 1.0))
    assert not sol.feasible and sol.rate == 0.0


def test_residual_outside_interior_raises():
    prob = SingleUserProblem(UserParams(1.0, 0.5, DischargeModel.ideal()), 1.0)
    with pytest.raises(OutOfInteriorRange):
        stationarity_residual_p2(prob, 1.0)


@given(users, st.floats(0.5, 2.0))
def test_solution_respects_constraints(user, T):
    prob = SingleUserProblem(user, T)
    sol = solve_p2(prob)
    if not sol.feasible:
        return
    assert 0 < sol.duration <= T * (1 + 1e-12)
    assert sol.discharge <= peak_discharge(user.model) * (1 + 1e-12)
    assert sol.duration * sol.discharge <= user.battery_energy * (1 + 1e-9)
    assert sol.rate == pytest.approx(rate_at(user, sol.duration))


@given(users)
def test_golden_beats_coarse_grid(user):
    prob = SingleUserProblem(user, 1.0)
    sol = solve_p2(prob)
    grid = brute_force_p1(prob, 200)
    assert sol.rate >= grid.rate - 1e-9


@given(users, st.floats(1.01, 3.0))
def test_rate_monotone_in_energy_and_horizon(user, factor):
    base = solve_p2(SingleUserProblem(user, 1.0)).rate
    richer = UserParams(user.battery_energy * factor, user.circuit_cost, user.model)
    assert solve_p2(SingleUserProblem(richer, 1.0)).rate >= base - 1e-12
    assert solve_p2(SingleUserProblem(user, factor)).rate >= base - 1e-12


@given(st.floats(0.0, 1.0), st.floats(0.05, 0.9))
def test_optimal_discharge_independent_of_energy(gamma, frac):
    template = SingleUserProblem(UserParams(1.0, gamma + 0.01, DischargeModel.ideal()), 100.0)
    rep = check_linearity_in_B(template, [0.5, 1.0, 2.0], 1e-6)
    assert rep.passed, rep.notes


@given(users)
def test_windowed_rate_concave_nondecreasing(user):
    F = WindowedRate(user, 1.0)
    w = np.linspace(0.0, 1.0, 41)
    v = np.array([F(x) for x in w])
    assert np.all(np.diff(v) >= -1e-12)
    assert np.all(v[1:-1] >= 0.5 * (v[:-2] + v[2:]) - 1e-9)


@given(st.lists(users, min_size=2, max_size=4))
def test_equal_marginal_matches_golden_for_pairs(us):
    F = [WindowedRate(u, 1.0) for u in us]
    w = allocate_time_equal_marginal(F, 1.0)
    assert w.sum() <= 1.0 + 1e-9 and w.min() >= 0
    got = sum(f(x) for f, x in zip(F, w))
    if len(us) == 2:
        from macopt.convex import maximize_concave_1d

        _, best, _ = maximize_concave_1d(lambda t: F[0](t) + F[1](1.0 - t), 0.0, 1.0, tol=1e-12)
        assert got >= best - 1e-7
    # no single transfer of time improves the total
    for i in range(len(F)):
        for j in range(len(F)):
            if i != j and w[i] > 1e-3:
                moved = got - F[i](w[i]) + F[i](w[i] - 1e-3) - F[j](w[j]) + F[j](w[j] + 1e-3)
                assert moved <= got + 1e-7


def test_interior_flag():
    prob = SingleUserProblem(UserParams(1.25, 0.5, DischargeModel.ideal()), 1.0)
    assert is_interior(prob, solve_p2(prob))
    prob0 = SingleUserProblem(UserParams(1.25, 0.0, DischargeModel.ideal()), 1.0)
    assert not is_interior(prob0, solve_p2(prob0))


def test_ideal_rate_value():
    sol = solve_p2(SingleUserProblem(UserParams(1.25, 0.5, DischargeModel.ideal()), 1.0))
    assert sol.rate == pytest.approx(0.580, abs=1e-3)
    # x = B / tau* solves (0.5 + x) ln(0.5 + x) = x
    x = 1.25 / sol.duration
    assert (0.5 + x) * math.log(0.5 + x) == pytest.approx(x, abs=1e-6)


def test_ideal_zero_cost_whole_frame():
    sol = solve_p2(SingleUserProblem(UserParams(1.0, 0.0, DischargeModel.ideal()), 1.0))
    assert sol.duration == 1.0 and sol.transmit_power == pytest.approx(1.0)
    assert sol.rate == pytest.approx(math.log(2))


def test_high_resistance_infeasible_both_paths():
    prob = SingleUserProblem(UserParams(1.25, 0.5, DischargeModel.quadratic(10.0)), 1.0)
    assert not solve_p2(prob).feasible
    assert not brute_force_p1(prob, 50).feasible


def test_no_energy_limit():
    prob = SingleUserProblem(UserParams(1e-9, 0.5, DischargeModel.ideal()), 1.0)
    assert solve_p2(prob).rate < 1e-8
    assert brute_force_p1(prob, 100).rate < 1e-8


def test_brute_force_close_to_solver():
    prob = SingleUserProblem(UserParams(1.25, 0.5, DischargeModel.ideal()), 1.0)
    assert brute_force_p1(prob, 2000).rate == pytest.approx(solve_p2(prob).rate, abs=1e-3)


def test_zero_cost_has_no_interior_stationary_point():
    prob = SingleUserProblem(UserParams(1.0, 0.0, DischargeModel.ideal()), 1.0)
    for tau in (0.2, 0.5, 0.9):
        assert stationarity_residual_p2(prob, tau) > 0


def test_linearity_saturates_at_horizon():
    template = SingleUserProblem(UserParams(1.0, 0.5, DischargeModel.ideal()), 1.0)
    rep = check_linearity_in_B(template, [1.0, 5.0, 10.0])
    assert not rep.passed and not rep.interior[-1]
    dup = check_linearity_in_B(SingleUserProblem(template.user, 10.0), [1.0, 1.0])
    assert dup.passed and dup.spread == 0.0
