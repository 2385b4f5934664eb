"""Two-user multiple-access channel: NOMA, TDMA and hybrid sum-rates.

The frame has four phases: 1 (idle), 2 (user 1 alone), 3 (user 2 alone) and
4 (both users, decoded by SIC).  Arrays indexed by phase use positions 0..3;
arrays indexed by user use positions 0 and 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .battery import UserParams, eval_discharge, peak_discharge
from .convex import (DEFAULT_MAX_ITER, DEFAULT_TOL, SolveReport, Status, maximize_concave_1d,
                     simplex_grid)
from .exceptions import InfeasibleStart, InvalidModel, SolverFailure
from .program import PerspectiveProgram, sum_rate_program
from .single_user import WindowedRate, allocate_time_equal_marginal

# bitmask of the users active in each phase
PHASE_MASKS = (0b00, 0b01, 0b10, 0b11)


@dataclass(frozen=True)
class TwoUserInstance:
    users: tuple[UserParams, UserParams]
    horizon: float

    def __post_init__(self):
        if len(self.users) != 2:
            raise InvalidModel(f"expected exactly 2 users, got {len(self.users)}")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise InvalidModel(f"horizon must be finite and > 0, got {self.horizon}")
        object.__setattr__(self, "users", tuple(self.users))

    @classmethod
    def symmetric(cls, user: UserParams, horizon: float = 1.0) -> "TwoUserInstance":
        return cls((user, user), horizon)

    def swapped(self) -> "TwoUserInstance":
        return TwoUserInstance((self.users[1], self.users[0]), self.horizon)


@dataclass
class FrameAllocation:
    """Durations ``tau[i]`` and energies ``e[i, u]`` (drawn) and ``E[i, u]`` (transmitted)."""

    durations: np.ndarray
    drawn_energy: np.ndarray
    transmit_energy: np.ndarray

    @classmethod
    def empty(cls, horizon: float, n_phases: int = 4, n_users: int = 2) -> "FrameAllocation":
        tau = np.zeros(n_phases)
        tau[0] = horizon
        return cls(tau, np.zeros((n_phases, n_users)), np.zeros((n_phases, n_users)))

    def violations(self, users, horizon: float, masks=PHASE_MASKS, tol: float = 1e-9) -> list[str]:
        """List every broken frame constraint (empty when the allocation is valid)."""
        out = []
        tau, e, E = self.durations, self.drawn_energy, self.transmit_energy
        if tau.min() < -tol:
            out.append("negative duration")
        if tau.sum() > horizon + tol:
            out.append(f"durations sum to {tau.sum():.12g} > T")
        for i, m in enumerate(masks):
            for u, user in enumerate(users):
                if not m >> u & 1:
                    if e[i, u] != 0.0 or E[i, u] != 0.0:
                        out.append(f"user {u + 1} has energy in phase {i + 1} it is not part of")
                    continue
                if e[i, u] < -tol or E[i, u] < -tol:
                    out.append(f"negative energy for user {u + 1} in phase {i + 1}")
                d0 = peak_discharge(user.model)
                if math.isfinite(d0) and e[i, u] > tau[i] * d0 + tol:
                    out.append(f"user {u + 1} exceeds the peak discharge in phase {i + 1}")
                if tau[i] > 0:
                    cap = tau[i] * (eval_discharge(user.model, min(e[i, u] / tau[i], d0))
                                    - user.circuit_cost)
                    if E[i, u] > max(cap, 0.0) + tol:
                        out.append(f"user {u + 1} transmits more than it can deliver "
                                   f"in phase {i + 1}")
        for u, user in enumerate(users):
            if e[:, u].sum() > user.battery_energy + tol:
                out.append(f"user {u + 1} overdraws its battery")
        return out

    def check(self, users, horizon: float, masks=PHASE_MASKS, tol: float = 1e-9):
        bad = self.violations(users, horizon, masks, tol)
        if bad:
            raise AssertionError("; ".join(bad))


def sum_rate_objective(alloc: FrameAllocation) -> float:
    """``sum_i tau_i ln(1 + sum_u E_i^u / tau_i)`` in nats."""
    tau = alloc.durations
    total = 0.0
    for i in range(tau.shape[0]):
        if tau[i] > 0:
            total += tau[i] * math.log1p(alloc.transmit_energy[i].sum() / tau[i])
    return total


# ---------------------------------------------------------------------------
# NOMA
# ---------------------------------------------------------------------------
def full_frame_powers(users, horizon: float) -> np.ndarray:
    """Transmit power of each user when it spreads its battery over the whole frame."""
    out = np.empty(len(users))
    for k, u in enumerate(users):
        d = min(u.battery_energy / horizon, peak_discharge(u.model))
        out[k] = max(eval_discharge(u.model, d) - u.circuit_cost, 0.0)
    return out


def noma_sum_rate(instance: TwoUserInstance) -> tuple[float, FrameAllocation]:
    T = instance.horizon
    P = full_frame_powers(instance.users, T)
    alloc = FrameAllocation(np.array([0.0, 0.0, 0.0, T]), np.zeros((4, 2)), np.zeros((4, 2)))
    for u, user in enumerate(instance.users):
        if P[u] > 0:
            alloc.drawn_energy[3, u] = T * min(user.battery_energy / T, peak_discharge(user.model))
            alloc.transmit_energy[3, u] = T * P[u]
    if not P.any():
        alloc.durations[:] = [T, 0.0, 0.0, 0.0]
    return T * math.log1p(P.sum()), alloc


# ---------------------------------------------------------------------------
# TDMA
# ---------------------------------------------------------------------------
def tdma_sum_rate(instance: TwoUserInstance, tol: float = DEFAULT_TOL,
                  method: str = "marginal") -> tuple[float, float, float]:
    """Best split of the frame into solo windows; returns ``(rate, tau_2, tau_3)``.

    ``method`` is ``"marginal"`` (equal-marginal bisection) or ``"golden"``
    (golden section over ``tau_2``).
    """
    T = instance.horizon
    F = [WindowedRate(u, T) for u in instance.users]
    if method == "marginal":
        w = allocate_time_equal_marginal(F, T)
        t2, t3 = float(w[0]), float(w[1])
    elif method == "golden":
        if F[0].peak_tau + F[1].peak_tau <= T:
            t2, t3 = F[0].peak_tau, F[1].peak_tau
        else:
            t2, _, _ = maximize_concave_1d(lambda t: F[0](t) + F[1](T - t), 0.0, T,
                                           tol=min(tol, 1e-10) * T)
            t3 = T - t2
    else:
        raise ValueError(f"unknown TDMA method {method!r}")
    # report the windows actually used
    t2, t3 = min(t2, F[0].peak_tau), min(t3, F[1].peak_tau)
    return F[0](t2) + F[1](t3), t2, t3


def tdma_allocation(instance: TwoUserInstance, t2: float, t3: float) -> FrameAllocation:
    T = instance.horizon
    alloc = FrameAllocation(np.array([T - t2 - t3, t2, t3, 0.0]), np.zeros((4, 2)),
                            np.zeros((4, 2)))
    for u, (phase, t) in enumerate(((1, t2), (2, t3))):
        user = instance.users[u]
        if t <= 0:
            continue
        d = min(user.battery_energy / t, peak_discharge(user.model))
        alloc.drawn_energy[phase, u] = t * d
        alloc.transmit_energy[phase, u] = t * max(eval_discharge(user.model, d)
                                                  - user.circuit_cost, 0.0)
    return alloc


# ---------------------------------------------------------------------------
# hybrid
# ---------------------------------------------------------------------------
def allocation_from_program(prog: PerspectiveProgram, kept_masks, x: np.ndarray,
                            masks, horizon: float) -> FrameAllocation:
    """Scatter a program solution back onto the full phase layout given by ``masks``."""
    n_users = len(prog.users)
    index = {m: i for i, m in enumerate(masks)}
    tau = np.zeros(len(masks))
    e = np.zeros((len(masks), n_users))
    E = np.zeros((len(masks), n_users))
    tx = prog.transmit_energy(x)
    for p, m in enumerate(kept_masks):
        i = index[m]
        tau[i] = max(x[p], 0.0)
        for u in prog.phases[p].members:
            e[i, u] = max(x[prog.evar[(p, u)]], 0.0)
            E[i, u] = tx[(p, u)]
    idle = index.get(0)
    if idle is not None:
        tau[idle] = max(horizon - (tau.sum() - tau[idle]), 0.0)
    return FrameAllocation(tau, e, E)


def hybrid_sum_rate(instance: TwoUserInstance, tol: float = DEFAULT_TOL,
                    max_iter: int = DEFAULT_MAX_ITER) -> tuple[float, FrameAllocation, SolveReport]:
    """Maximum hybrid NOMA-TDMA sum-rate (nats) with its allocation and certificate."""
    T = instance.horizon
    prog, kept = sum_rate_program(instance.users, T, PHASE_MASKS[1:])
    if prog.n_phases == 0:
        return 0.0, FrameAllocation.empty(T), SolveReport(Status.OPTIMAL, 0.0, 0.0, 0.0, 0)
    x, rep = prog.solve(tol=tol, max_iter=max_iter)
    if not rep.ok:
        raise SolverFailure("hybrid sum-rate solve was not certified optimal", rep)
    alloc = allocation_from_program(prog, kept, x, PHASE_MASKS, T)
    return sum_rate_objective(alloc), alloc, rep


def brute_force_hybrid(instance: TwoUserInstance, resolution: int = 20,
                       tol: float = DEFAULT_TOL) -> float:
    """Grid search over ``(tau_2, tau_3, tau_4)`` with exact inner energy allocation.

    A phase given positive time must be used by all its members, so a grid point
    where that is unaffordable is skipped.
    """
    if resolution < 4:
        raise ValueError("resolution must be >= 4")
    T = instance.horizon
    prog, kept = sum_rate_program(instance.users, T, PHASE_MASKS[1:])
    if prog.n_phases == 0:
        return 0.0
    pos = [PHASE_MASKS[1:].index(m) for m in kept]
    best = 0.0
    for taus in simplex_grid(3, T, resolution):
        dur = taus[pos]
        if any(taus[i] > 0 for i in range(3) if i not in pos):
            continue
        sub = prog.fixed_durations(dur)
        if not sub.is_feasible():
            continue
        try:
            value, _ = sub.solve(tol=tol)
        except InfeasibleStart:
            continue
        best = max(best, value)
    return best
