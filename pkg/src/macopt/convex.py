"""Concave maximisation over small polyhedra.

Two ascent methods share one constraint representation:

* ``"projected-gradient"``: spectral step, Armijo backtracking along the
  projection arc, exact Euclidean projection (least-distance NNLS, with cyclic
  Dykstra as an alternative).
* ``"barrier"``: primal log-barrier with damped Newton steps.  It needs the
  Hessian and a strictly feasible start (found by a phase-one solve when the
  given start is on the boundary).  The perspective programs of the MAC
  solvers are non-differentiable wherever a phase has zero length, which stalls
  gradient projection; the barrier keeps iterates strictly inside.

Every solve returns a :class:`SolveReport` whose residuals are re-derived by
:func:`kkt_residual`, independently of the method that produced the point.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from . import kernels
from .exceptions import EmptyInterval, InfeasibleStart, NonFiniteObjective

log = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

DEFAULT_TOL = 1e-6
FEAS_TOL = 1e-9
DEFAULT_MAX_ITER = 100_000
ARMIJO = 1e-4


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    MAX_ITERATIONS = "max_iterations"
    INFEASIBLE = "infeasible"


@dataclass
class SolveReport:
    status: Status
    objective: float
    stationarity_residual: float
    feasibility_residual: float
    iterations: int

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL

    def to_dict(self) -> dict:
        return {"status": self.status.value, "objective": self.objective,
                "stationarity_residual": self.stationarity_residual,
                "feasibility_residual": self.feasibility_residual,
                "iterations": self.iterations}


@dataclass
class LinearConstraintSet:
    """``lower <= x <= upper`` and ``rows @ x <= rhs``.

    Infinite bounds are allowed and simply dropped from the inequality form.
    """

    lower: np.ndarray
    upper: np.ndarray
    rows: np.ndarray = field(default=None)
    rhs: np.ndarray = field(default=None)

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=np.float64).copy()
        self.upper = np.asarray(self.upper, dtype=np.float64).copy()
        n = self.lower.shape[0]
        if self.upper.shape != (n,):
            raise ValueError("lower and upper must have the same length")
        if np.any(self.lower > self.upper):
            raise ValueError("every lower bound must be <= its upper bound")
        if self.rows is None:
            self.rows = np.zeros((0, n))
            self.rhs = np.zeros(0)
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=np.float64))
        self.rhs = np.asarray(self.rhs, dtype=np.float64).reshape(-1)
        if self.rows.shape[0] == 0:
            self.rows = self.rows.reshape(0, n)
        if self.rows.shape != (self.rhs.shape[0], n):
            raise ValueError("rows must be (m, n) with m == len(rhs)")

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def as_inequalities(self) -> tuple[np.ndarray, np.ndarray]:
        """All constraints as ``G x <= h`` (general rows first, then bounds)."""
        n = self.dim
        eye = np.eye(n)
        lo = np.isfinite(self.lower)
        hi = np.isfinite(self.upper)
        G = np.vstack([self.rows, -eye[lo], eye[hi]])
        h = np.concatenate([self.rhs, -self.lower[lo], self.upper[hi]])
        return np.ascontiguousarray(G), h

    def violation(self, x: np.ndarray) -> float:
        """Largest constraint violation at ``x`` (0 when feasible)."""
        G, h = self.as_inequalities()
        if G.shape[0] == 0:
            return 0.0
        return float(max(0.0, np.max(G @ x - h)))

    def project(self, y: np.ndarray, method: str = "ldp", tol: float = 1e-10,
                max_sweeps: int = 10_000) -> np.ndarray:
        """Euclidean projection of ``y`` onto the set."""
        G, h = self.as_inequalities()
        y = np.asarray(y, dtype=np.float64)
        if G.shape[0] == 0:
            return y.copy()
        if method == "ldp":
            x, ok = kernels.project_ldp(G, h, y)
            if not ok:
                raise InfeasibleStart("constraint set is empty")
            return x
        if method == "dykstra":
            x, _ = kernels.project_dykstra(G, h, y, tol, max_sweeps)
            return x
        raise ValueError(f"unknown projection method {method!r}")

    def is_feasible(self) -> bool:
        """Feasibility pass: project the origin and check the result."""
        try:
            x = self.project(np.zeros(self.dim))
        except InfeasibleStart:
            return False
        return self.violation(x) <= 1e-7


# ---------------------------------------------------------------------------
# one dimension
# ---------------------------------------------------------------------------
def maximize_concave_1d(f: Callable[[float], float], lo: float, hi: float,
                        tol: float = 1e-10, max_iter: int = 500):
    """Golden-section search for the maximiser of a concave ``f`` on ``[lo, hi]``.

    Both endpoints are kept as candidates, so monotone functions return the
    right boundary point.  Returns ``(x, f(x), SolveReport)``.
    """
    if lo > hi:
        raise EmptyInterval(f"empty interval [{lo}, {hi}]")
    f_lo, f_hi = f(lo), f(hi)
    if hi - lo <= tol:
        x, fx = (lo, f_lo) if f_lo >= f_hi else (hi, f_hi)
        return x, fx, SolveReport(Status.OPTIMAL, fx, 0.0, 0.0, 0)
    a, b = lo, hi
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    it = 0
    while b - a > tol and it < max_iter:
        it += 1
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = f(x1)
    xm = 0.5 * (a + b)
    fm = f(xm)
    best_x, best_f = max([(xm, fm), (x1, f1), (x2, f2), (lo, f_lo), (hi, f_hi)],
                         key=lambda p: p[1])
    if not math.isfinite(best_f):
        raise NonFiniteObjective(f"objective is not finite at x={best_x}")
    status = Status.OPTIMAL if b - a <= tol else Status.MAX_ITERATIONS
    return best_x, best_f, SolveReport(status, best_f, b - a, 0.0, it)


def bisect_root(fn: Callable[[float], float], lo: float, hi: float, tol: float = 1e-14,
                max_iter: int = 400) -> float:
    """Root of a continuous ``fn`` with a sign change on ``[lo, hi]``."""
    f_lo = fn(lo)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol * max(1.0, abs(mid)):
            break
        f_mid = fn(mid)
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# KKT certificate
# ---------------------------------------------------------------------------
def kkt_residual(grad: np.ndarray, cons: LinearConstraintSet, x: np.ndarray,
                 active_tol: float = 1e-6) -> tuple[float, float]:
    """Return ``(stationarity, feasibility)`` for a maximisation at ``x``.

    Stationarity is the infinity norm of what remains of ``grad`` after the best
    non-negative combination of active constraint normals is removed.  A row is
    active when its slack is within ``active_tol * (1 + |rhs|)``.
    """
    G, h = cons.as_inequalities()
    stat, feas, _ = kkt_fit(grad, G, h, x, active_tol)
    return stat, feas


def kkt_fit(grad, G, h, x, active_tol: float = 1e-6):
    """Like :func:`kkt_residual` on raw ``G x <= h``; also returns the multipliers.

    The third value has one entry per row of ``G`` (zero on inactive rows).
    """
    grad = np.asarray(grad, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    lam_full = np.zeros(G.shape[0])
    if G.shape[0] == 0:
        return float(np.max(np.abs(grad), initial=0.0)), 0.0, lam_full
    slack = h - G @ x
    feas = float(max(0.0, -slack.min()))
    active = slack <= active_tol * (1.0 + np.abs(h))
    if not active.any():
        return float(np.max(np.abs(grad), initial=0.0)), feas, lam_full
    Ga = np.ascontiguousarray(G[active].T)
    lam, _, _ = kernels.nnls(Ga, grad, 50 * Ga.shape[1] + 100)
    lam_full[active] = lam
    stat = float(np.max(np.abs(grad - Ga @ lam), initial=0.0))
    return stat, feas, lam_full


# ---------------------------------------------------------------------------
# n dimensions
# ---------------------------------------------------------------------------
def maximize_concave_linear(fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
                            cons: LinearConstraintSet, x0: np.ndarray,
                            tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                            method: str = "projected-gradient",
                            hess: Callable[[np.ndarray], np.ndarray] | None = None,
                            projection: str = "ldp", check_monotone: bool = False):
    """Maximise a concave ``fun`` over ``cons`` starting from feasible ``x0``.

    ``fun(x)`` returns ``(value, gradient)``.  The barrier method also needs
    ``hess(x)``.  Returns ``(x, SolveReport)``.
    """
    x0 = np.asarray(x0, dtype=np.float64).copy()
    viol = cons.violation(x0)
    if viol > 1e-9:
        raise InfeasibleStart(f"start point violates the constraints by {viol:.3g}")
    if method == "projected-gradient":
        x, it, converged = _projected_gradient(fun, cons, x0, tol, max_iter, projection,
                                               check_monotone)
    elif method == "barrier":
        if hess is None:
            raise ValueError("barrier method needs a Hessian callback")
        x, it, converged = _barrier(fun, hess, cons, x0, tol, max_iter)
    else:
        raise ValueError(f"unknown method {method!r}")
    return x, certify(fun, cons, x, it, tol, converged)


def certify(fun, cons: LinearConstraintSet, x: np.ndarray, iterations: int,
            tol: float = DEFAULT_TOL, converged: bool = True) -> SolveReport:
    f, g = fun(x)
    if not (math.isfinite(f) and np.all(np.isfinite(g))):
        raise NonFiniteObjective("objective or gradient not finite at the returned point")
    stat, feas = kkt_residual(g, cons, x)
    if stat <= tol and feas <= FEAS_TOL:
        status = Status.OPTIMAL
    else:
        status = Status.MAX_ITERATIONS
        log.debug("uncertified solve: stationarity %.3g feasibility %.3g converged=%s",
                  stat, feas, converged)
    return SolveReport(status, float(f), stat, feas, iterations)


def _eval(fun, x):
    f, g = fun(x)
    if not (math.isfinite(f) and np.all(np.isfinite(g))):
        raise NonFiniteObjective(f"objective or gradient not finite at x={x}")
    return f, np.asarray(g, dtype=np.float64)


def _projected_gradient(fun, cons, x, tol, max_iter, projection, check_monotone):
    proj = lambda y: cons.project(y, method=projection)  # noqa: E731
    f, g = _eval(fun, x)
    step = 1.0
    for it in range(1, max_iter + 1):
        # gradient-mapping residual with unit step
        if np.max(np.abs(proj(x + g) - x)) <= tol:
            return x, it - 1, True
        while True:
            xn = proj(x + step * g)
            fn, gn = fun(xn)
            if math.isfinite(fn) and fn >= f + ARMIJO * (g @ (xn - x)):
                break
            step *= 0.5
            if step < 1e-18:
                return x, it, False
        if check_monotone:
            assert fn >= f - 1e-12 * max(1.0, abs(f)), "projected-gradient step decreased f"
        s = xn - x
        yv = gn - g
        curv = -(s @ yv)
        step = (s @ s) / curv if curv > 1e-300 else 1.0
        step = min(max(step, 1e-12), 1e12)
        x, f, g = xn, fn, np.asarray(gn, dtype=np.float64)
    return x, max_iter, False


def _strictly_interior(cons: LinearConstraintSet, x0: np.ndarray, max_iter: int):
    """Phase one: find ``x`` with every inequality strictly slack."""
    G, h = cons.as_inequalities()
    slack = h - G @ x0
    if slack.size == 0 or slack.min() > 0:
        return x0
    n = x0.shape[0]
    # maximise -s subject to G x - s <= h, s >= -1 (bounded below keeps it finite)
    Gp = np.hstack([G, -np.ones((G.shape[0], 1))])
    z0 = np.concatenate([x0, [max(0.0, -slack.min()) + 1.0]])
    ext = LinearConstraintSet(np.full(n + 1, -np.inf), np.full(n + 1, np.inf),
                              np.vstack([Gp, np.eye(n + 1)[-1:] * -1.0]),
                              np.concatenate([h, [1.0]]))
    lin = np.zeros(n + 1)
    lin[-1] = -1.0
    z, _, _ = _barrier(lambda z: (lin @ z, lin), lambda z: np.zeros((n + 1, n + 1)),
                       ext, z0, 1e-9, max_iter, stop=lambda z: z[-1] < -1e-9)
    if z[-1] >= 0:
        raise InfeasibleStart("constraint set has no strictly feasible point")
    return z[:n]


def _barrier(fun, hess, cons, x, tol, max_iter, stop=None, gap=1e-12, mu=20.0):
    G, h = cons.as_inequalities()
    m = G.shape[0]
    if m == 0:
        raise ValueError("barrier method needs at least one constraint")
    if (h - G @ x).min() <= 0:
        x = _strictly_interior(cons, x, max_iter)
    f, g = _eval(fun, x)
    t = max(1.0, m / max(abs(f), 1.0))
    newton = 0
    while True:
        for _ in range(200):
            s = h - G @ x
            f, g = _eval(fun, x)
            H = hess(x)
            inv = 1.0 / s
            grad = t * g - G.T @ inv
            HH = t * H - (G.T * (inv * inv)) @ G
            try:
                dx = np.linalg.solve(HH, -grad)
            except np.linalg.LinAlgError:
                dx = np.linalg.lstsq(HH, -grad, rcond=None)[0]
            dec = grad @ dx
            # half the squared decrement bounds the centering suboptimality; it
            # cannot be resolved below the rounding level of t * f
            if not math.isfinite(dec) or dec <= 0 or dec / 2 < max(1e-9, 1e-13 * abs(t * f)):
                break
            Gdx = G @ dx
            pos = Gdx > 0
            step = 1.0
            if pos.any():
                # denormal Gdx entries overflow to inf, which min() ignores
                with np.errstate(over="ignore"):
                    step = min(1.0, 0.99 * np.min(s[pos] / Gdx[pos]))
            phi = t * f + np.sum(np.log(s))
            accepted = False
            while step > 1e-16:
                xn = x + step * dx
                sn = h - G @ xn
                if sn.min() > 0:
                    fn = fun(xn)[0]
                    if math.isfinite(fn) and t * fn + np.sum(np.log(sn)) >= phi + 0.25 * step * dec:
                        accepted = True
                        break
                step *= 0.5
            newton += 1
            if not accepted or np.array_equal(xn, x):
                break
            x = xn
            if stop is not None and stop(x):
                return x, newton, True
            if newton >= max_iter:
                return x, newton, False
        if m / t < gap:
            return x, newton, True
        t *= mu


# ---------------------------------------------------------------------------
# lattice enumeration for brute-force oracles
# ---------------------------------------------------------------------------
def _compositions(dim: int, budget: int) -> Iterator[tuple[int, ...]]:
    if dim == 1:
        for k in range(budget + 1):
            yield (k,)
        return
    for k in range(budget + 1):
        for rest in _compositions(dim - 1, budget - k):
            yield (k,) + rest


def simplex_grid(dim: int, total: float, resolution: int) -> Iterator[np.ndarray]:
    """Yield every lattice vector ``x >= 0`` with ``sum(x) <= total``.

    The lattice step is ``total / resolution``; there are
    ``comb(resolution + dim, dim)`` points.
    """
    if dim < 1 or resolution < 1:
        raise ValueError("dim and resolution must be >= 1")
    step = total / resolution
    for counts in _compositions(dim, resolution):
        yield np.array(counts, dtype=np.float64) * step


def simplex_grid_size(dim: int, resolution: int) -> int:
    return math.comb(resolution + dim, dim)


def lattice_counts(dim: int, resolution: int) -> np.ndarray:
    """All integer compositions as one array (rows in :func:`simplex_grid` order)."""
    return np.array(list(_compositions(dim, resolution)), dtype=np.int64).reshape(-1, dim)


