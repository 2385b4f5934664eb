"""Single-user throughput with a non-ideal battery and circuit cost.

The joint problem over duration ``tau``, discharge ``d`` and transmit power
``P`` (maximise ``tau * ln(1 + P)`` with ``P <= g(d) - gamma`` and
``tau * d <= B``) reduces to a concave search over ``tau`` once the battery is
drained as fast as useful: ``d = min(B / tau, D0)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .battery import UserParams, eval_derivative, eval_discharge, peak_discharge
from .convex import bisect_root, maximize_concave_1d
from .exceptions import InvalidModel, OutOfInteriorRange


@dataclass(frozen=True)
class SingleUserProblem:
    user: UserParams
    horizon: float

    def __post_init__(self):
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise InvalidModel(f"horizon must be finite and > 0, got {self.horizon}")


@dataclass(frozen=True)
class SingleUserSolution:
    duration: float
    discharge: float
    transmit_power: float
    rate: float  # nats over the frame
    feasible: bool

    def rate_per_second(self, horizon: float) -> float:
        return self.rate / horizon


INFEASIBLE = SingleUserSolution(0.0, 0.0, 0.0, 0.0, False)


def discharge_at(user: UserParams, tau: float) -> float:
    """Energy-exhausting discharge power ``min(B / tau, D0)``."""
    if tau <= 0:
        return peak_discharge(user.model)
    return min(user.battery_energy / tau, peak_discharge(user.model))


def rate_at(user: UserParams, tau: float) -> float:
    """``tau * ln(1 + [g(min(B/tau, D0)) - gamma]^+)`` in nats."""
    if tau <= 0:
        return 0.0
    p = eval_discharge(user.model, discharge_at(user, tau)) - user.circuit_cost
    return tau * math.log1p(p) if p > 0 else 0.0


def search_interval(user: UserParams, horizon: float) -> tuple[float, float]:
    """Durations worth searching: from ``B/D0`` up to where ``g(B/tau)`` hits ``gamma``."""
    B = user.battery_energy
    d0 = peak_discharge(user.model)
    lo = 0.0 if math.isinf(d0) else min(B / d0, horizon)
    dmin = user.min_active_discharge
    hi = horizon if not dmin else min(horizon, B / dmin)
    return lo, max(lo, hi)


def solve_p2(problem: SingleUserProblem, tol: float = 1e-12) -> SingleUserSolution:
    """Optimal single-user schedule by golden section over the duration.

    Returns an infeasible solution (rate 0) when ``g(D0) <= gamma``.
    """
    user, T = problem.user, problem.horizon
    if not user.can_transmit():
        return INFEASIBLE
    lo, hi = search_interval(user, T)
    # the floor keeps B/tau finite for ideal batteries
    lo_search = max(lo, 1e-15 * T)
    tau, rate, _ = maximize_concave_1d(lambda t: rate_at(user, t), lo_search, hi,
                                       tol=tol * max(1.0, hi))
    boundary = min(lo, T)
    if boundary > 0 and rate_at(user, boundary) > rate:
        tau, rate = boundary, rate_at(user, boundary)
    d = discharge_at(user, tau)
    p = max(eval_discharge(user.model, d) - user.circuit_cost, 0.0)
    return SingleUserSolution(tau, d, p, rate, True)


def brute_force_p1(problem: SingleUserProblem, grid: int = 2000) -> SingleUserSolution:
    """Grid search over ``(tau, d)`` directly on the unreduced problem.

    ``tau`` runs over a uniform grid on ``(0, T]`` and ``d`` over a uniform grid
    on ``[0, d_max]`` with ``d_max = min(D0, max(4 B / T, 4 (1 + gamma)))``; the
    second term covers the burst discharge of a circuit-limited transmitter.
    """
    if grid < 10:
        raise ValueError("grid must be >= 10")
    user, T = problem.user, problem.horizon
    B, gamma = user.battery_energy, user.circuit_cost
    d_max = min(peak_discharge(user.model), max(4.0 * B / T, 4.0 * (1.0 + gamma)))
    kind, a, xs, ys = user.model.kernel_params()
    best, tau, d = kernels.grid_p1(kind, a, xs, ys, xs.shape[0], B, gamma,
                                   0.0, T, grid + 1, 0.0, d_max, grid + 1)
    if best <= 0 or tau <= 0:
        return SingleUserSolution(0.0, 0.0, 0.0, 0.0, user.can_transmit() and best > 0)
    p = max(eval_discharge(user.model, d) - gamma, 0.0)
    return SingleUserSolution(tau, d, p, best, p > 0)


def stationarity_residual_p2(problem: SingleUserProblem, tau: float) -> float:
    """Residual of the interior optimality condition at ``tau``.

    ``|(1 + g(x) - gamma) ln(1 + g(x) - gamma) - x g'(x)|`` with ``x = B / tau``.
    """
    user, T = problem.user, problem.horizon
    d0 = peak_discharge(user.model)
    lo = 0.0 if math.isinf(d0) else user.battery_energy / d0
    if not (lo < tau < T):
        raise OutOfInteriorRange(f"tau={tau} is outside the open interval ({lo}, {T})")
    x = user.battery_energy / tau
    s = 1.0 + eval_discharge(user.model, x) - user.circuit_cost
    if s <= 0:
        return math.inf
    return abs(s * math.log(s) - x * eval_derivative(user.model, x))


def is_interior(problem: SingleUserProblem, sol: SingleUserSolution, rel: float = 1e-9) -> bool:
    d0 = peak_discharge(problem.user.model)
    lo = 0.0 if math.isinf(d0) else problem.user.battery_energy / d0
    T = problem.horizon
    return sol.feasible and lo * (1 + rel) < sol.duration < T * (1 - rel)


@dataclass
class LinearityReport:
    energies: list[float]
    discharges: list[float | None]
    interior: list[bool]
    spread: float
    passed: bool
    notes: list[str] = field(default_factory=list)


def check_linearity_in_B(template: SingleUserProblem, energies: Sequence[float],
                         rel_tol: float = 1e-4) -> LinearityReport:
    """Check that the optimal discharge ``B / tau*`` is the same for every energy.

    Instances whose optimum sits on a boundary (``tau* = B/D0`` or ``tau* = T``)
    are reported rather than raised and are left out of the spread.
    """
    discharges, interior, notes = [], [], []
    for B in energies:
        user = UserParams(B, template.user.circuit_cost, template.user.model)
        prob = SingleUserProblem(user, template.horizon)
        sol = solve_p2(prob)
        inside = is_interior(prob, sol)
        interior.append(inside)
        discharges.append(B / sol.duration if sol.feasible and sol.duration > 0 else None)
        if not inside:
            notes.append(f"B={B}: optimum not interior (tau*={sol.duration:.6g})")
    vals = np.array([d for d, ok in zip(discharges, interior) if ok and d is not None])
    if vals.size == 0:
        return LinearityReport(list(energies), discharges, interior, math.nan, False, notes)
    spread = float((vals.max() - vals.min()) / vals.mean())
    return LinearityReport(list(energies), discharges, interior, spread,
                           spread <= rel_tol and all(interior), notes)


# ---------------------------------------------------------------------------
# value function of a user limited to a window, used by the TDMA schedules
# ---------------------------------------------------------------------------
class WindowedRate:
    """``F(w) = max_{tau <= w} rate(tau)``: concave and non-decreasing in ``w``."""

    def __init__(self, user: UserParams, horizon: float):
        self.user = user
        self.horizon = horizon
        self.best = solve_p2(SingleUserProblem(user, horizon))
        self.peak_tau = self.best.duration if self.best.feasible else 0.0
        d0 = peak_discharge(user.model)
        self.knee = 0.0 if math.isinf(d0) else min(user.battery_energy / d0, horizon)

    def __call__(self, window: float) -> float:
        if not self.best.feasible or window <= 0:
            return 0.0
        return rate_at(self.user, min(window, self.peak_tau))

    def marginal(self, window: float) -> float:
        """Right derivative ``F'(w)``."""
        if not self.best.feasible or window >= self.peak_tau:
            return 0.0
        user = self.user
        tau = max(window, 1e-300)
        d = discharge_at(user, tau)
        s = 1.0 + eval_discharge(user.model, d) - user.circuit_cost
        if s <= 1.0:
            return 0.0
        if tau <= self.knee:
            return math.log(s)
        return math.log(s) - d * eval_derivative(user.model, d) / s

    @property
    def flat_marginal(self) -> float:
        """Marginal value on ``(0, knee)`` where the discharge is capped at ``D0``."""
        if not self.best.feasible or self.knee <= 0:
            return math.inf
        return self.marginal(0.5 * min(self.knee, self.peak_tau))

    def window_for(self, level: float) -> tuple[float, float]:
        """Range ``[lo, hi]`` of windows where the marginal value crosses ``level``."""
        if not self.best.feasible or level <= 0:
            return (self.peak_tau, self.peak_tau) if self.best.feasible else (0.0, 0.0)
        top = self.peak_tau
        flat = self.flat_marginal
        if level > flat * (1 + 1e-12):
            return 0.0, 0.0
        edge = min(self.knee, top)
        if level >= flat * (1 - 1e-12):
            return 0.0, edge
        if self.marginal(top * (1 - 1e-15)) >= level:
            return top, top
        start = max(edge, 1e-15 * self.horizon)
        w = bisect_root(lambda t: self.marginal(t) - level, start, top)
        return w, w


def allocate_time_equal_marginal(rates: Sequence[WindowedRate], horizon: float,
                                 iterations: int = 200) -> np.ndarray:
    """Split ``horizon`` among users maximising ``sum F_u(w_u)``.

    Users first get their unconstrained optimum; if that overfills the frame the
    common marginal value is found by bisection.
    """
    peaks = np.array([r.peak_tau for r in rates])
    if peaks.sum() <= horizon:
        return peaks
    lam_lo = 0.0
    lam_hi = min(max(r.marginal(1e-12 * horizon) for r in rates), 1e6) * (1 + 1e-9)

    def total(lam, upper):
        return sum(r.window_for(lam)[1 if upper else 0] for r in rates)

    for _ in range(iterations):
        mid = 0.5 * (lam_lo + lam_hi)
        if total(mid, upper=False) > horizon:
            lam_lo = mid
        else:
            lam_hi = mid
    lows = np.array([r.window_for(lam_hi)[0] for r in rates])
    highs = np.array([max(r.window_for(lam_lo)[1], r.window_for(lam_hi)[1]) for r in rates])
    spare = horizon - lows.sum()
    out = lows.copy()
    for i in range(len(rates)):
        if spare <= 0:
            break
        add = min(spare, max(highs[i] - lows[i], 0.0))
        out[i] += add
        spare -= add
    return out
