import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from macopt.convex import (LinearConstraintSet, bisect_root, kkt_residual, lattice_counts,
                           maximize_concave_1d, maximize_concave_linear, simplex_grid,
                           simplex_grid_size)
from macopt.exceptions import EmptyInterval, InfeasibleStart


def ternary(f, lo, hi, n=200):
    for _ in range(n):
        a, b = lo + (hi - lo) / 3, hi - (hi - lo) / 3
        if f(a) < f(b):
            lo = a
        else:
            hi = b
    return 0.5 * (lo + hi)


@given(st.floats(-5, 5), st.floats(0.1, 10), st.floats(-3, 0), st.floats(0.5, 4))
def test_golden_matches_ternary(c, k, lo, width):
    f = lambda x: -k * (x - c) ** 2
    hi = lo + width
    x, fx, rep = maximize_concave_1d(f, lo, hi, tol=1e-11)
    assert rep.ok
    assert x == pytest.approx(ternary(f, lo, hi), abs=1e-6)
    assert x == pytest.approx(min(max(c, lo), hi), abs=1e-6)


def test_golden_monotone_returns_endpoint():
    x, _, _ = maximize_concave_1d(lambda t: t, 0.0, 2.0)
    assert x == 2.0
    with pytest.raises(EmptyInterval):
        maximize_concave_1d(lambda t: t, 1.0, 0.0)


def test_bisect_root():
    assert bisect_root(lambda x: x * x - 2, 0, 2) == pytest.approx(math.sqrt(2), rel=1e-13)


def box_qp(c, lo, hi):
    # max -|x - c|^2 over a box: clip
    return np.clip(c, lo, hi)


vec = arrays(np.float64, 4, elements=st.floats(-3, 3))


@given(vec, st.sampled_from(["projected-gradient", "barrier"]))
def test_box_qp_against_closed_form(c, method):
    lo, hi = -np.ones(4), np.ones(4) * 2
    cons = LinearConstraintSet(lo, hi)
    fun = lambda x: (-float(((x - c) ** 2).sum()), -2 * (x - c))
    hess = lambda x: -2 * np.eye(4)
    x, rep = maximize_concave_linear(fun, cons, np.zeros(4), tol=1e-7, method=method, hess=hess)
    assert rep.ok
    assert np.allclose(x, box_qp(c, lo, hi), atol=1e-5)


def test_simplex_qp_both_methods_agree():
    rng = np.random.default_rng(3)
    c = rng.normal(size=5)
    cons = LinearConstraintSet(np.zeros(5), np.full(5, np.inf), np.ones((1, 5)), [1.0])
    fun = lambda x: (float(c @ x - 2 * x @ x), c - 4 * x)
    hess = lambda x: -4 * np.eye(5)
    x0 = np.full(5, 0.1)
    a, ra = maximize_concave_linear(fun, cons, x0, tol=1e-8)
    b, rb = maximize_concave_linear(fun, cons, x0, tol=1e-8, method="barrier", hess=hess)
    assert ra.ok and rb.ok
    assert np.allclose(a, b, atol=1e-5)


def test_infeasible_start_rejected():
    cons = LinearConstraintSet(np.zeros(2), np.ones(2))
    with pytest.raises(InfeasibleStart):
        maximize_concave_linear(lambda x: (0.0, np.zeros(2)), cons, np.array([2.0, 0.0]))


@given(arrays(np.float64, 3, elements=st.floats(-4, 4)))
def test_projection_methods_agree(y):
    cons = LinearConstraintSet(np.zeros(3), np.full(3, 2.0), np.ones((1, 3)), [3.0])
    a = cons.project(y, "ldp")
    b = cons.project(y, "dykstra", tol=1e-12)
    assert cons.violation(a) <= 1e-9
    assert np.allclose(a, b, atol=1e-6)


def test_kkt_residual_zero_at_optimum():
    cons = LinearConstraintSet(np.zeros(2), np.ones(2))
    stat, feas = kkt_residual(np.array([1.0, -1.0]), cons, np.array([1.0, 0.0]))
    assert stat < 1e-12 and feas == 0.0
    stat, _ = kkt_residual(np.array([1.0, 0.0]), cons, np.array([0.5, 0.5]))
    assert stat > 0.5


@given(st.integers(1, 4), st.integers(1, 8))
def test_simplex_grid_counts(dim, res):
    pts = list(simplex_grid(dim, 1.0, res))
    assert len(pts) == simplex_grid_size(dim, res) == math.comb(res + dim, dim)
    assert all(p.sum() <= 1.0 + 1e-12 and p.min() >= 0 for p in pts)
    assert lattice_counts(dim, res).shape == (len(pts), dim)
