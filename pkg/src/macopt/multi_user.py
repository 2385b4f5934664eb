"""U-user multiple-access channel over the power-set frame.

Phase ``i`` (1-based) carries the users in bitmask ``i - 1``; phase 1 is idle.
Arrays indexed by phase use the bitmask as position.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .battery import DischargeModel, UserParams, eval_discharge, peak_discharge
from .convex import DEFAULT_MAX_ITER, DEFAULT_TOL, SolveReport, Status
from .exceptions import InvalidModel, PreconditionViolated, SolverFailure, TooManyUsers
from .program import sum_rate_program
from .single_user import WindowedRate, allocate_time_equal_marginal, discharge_at
from .two_user import FrameAllocation, allocation_from_program, full_frame_powers

MAX_USERS = 8


@dataclass(frozen=True)
class MultiUserInstance:
    users: tuple[UserParams, ...]
    horizon: float
    max_users: int = MAX_USERS

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        if len(self.users) < 1:
            raise InvalidModel("at least one user is required")
        if len(self.users) > self.max_users:
            raise TooManyUsers(f"{len(self.users)} users exceeds the cap of {self.max_users}")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise InvalidModel(f"horizon must be finite and > 0, got {self.horizon}")

    @property
    def n_users(self) -> int:
        return len(self.users)

    @classmethod
    def identical(cls, n: int, user: UserParams, horizon: float = 1.0) -> "MultiUserInstance":
        return cls(tuple([user] * n), horizon)


@dataclass(frozen=True)
class PhaseSet:
    index: int  # 1-based
    members: frozenset

    @property
    def mask(self) -> int:
        return self.index - 1

    @property
    def cardinality(self) -> int:
        return len(self.members)


def enumerate_phases(n_users: int, max_users: int = MAX_USERS) -> list[PhaseSet]:
    """All ``2**U`` phases in bitmask order; members are 1-based user labels."""
    if n_users < 1:
        raise InvalidModel("at least one user is required")
    if n_users > max_users:
        raise TooManyUsers(f"{n_users} users exceeds the cap of {max_users}")
    return [PhaseSet(m + 1, frozenset(u + 1 for u in range(n_users) if m >> u & 1))
            for m in range(2 ** n_users)]


def phases_by_cardinality(phases: Sequence[PhaseSet]) -> dict[int, list[int]]:
    """Map ``n`` to the phase indices with exactly ``n`` members."""
    out: dict[int, list[int]] = {}
    for ph in phases:
        out.setdefault(ph.cardinality, []).append(ph.index)
    return out


@dataclass
class MultiFrameAllocation(FrameAllocation):
    masks: tuple = field(default=())

    def __post_init__(self):
        if not self.masks:
            self.masks = tuple(range(self.durations.shape[0]))

    def check(self, users, horizon: float, tol: float = 1e-9):  # type: ignore[override]
        super().check(users, horizon, self.masks, tol)

    @classmethod
    def zeros(cls, n_users: int, horizon: float) -> "MultiFrameAllocation":
        n = 2 ** n_users
        tau = np.zeros(n)
        tau[0] = horizon
        return cls(tau, np.zeros((n, n_users)), np.zeros((n, n_users)))


def _lift(alloc: FrameAllocation) -> MultiFrameAllocation:
    return MultiFrameAllocation(alloc.durations, alloc.drawn_energy, alloc.transmit_energy)


# ---------------------------------------------------------------------------
# sum-rates
# ---------------------------------------------------------------------------
ACTIVE_PHASE = 1e-6  # relative duration above which a phase counts as used


def hybrid_sum_rate_multi(instance: MultiUserInstance, tol: float = DEFAULT_TOL,
                          max_iter: int = DEFAULT_MAX_ITER
                          ) -> tuple[float, MultiFrameAllocation, SolveReport]:
    """Maximum sum-rate over all ``2**U`` phases (nats).

    When the optimum is not unique the barrier lands in the middle of the
    optimal face, which can use phases of three or more cardinalities.  In that
    case the problem is re-solved on each adjacent pair of cardinalities and the
    first restricted optimum matching the full value is returned instead.
    """
    U, T = instance.n_users, instance.horizon
    masks = list(range(2 ** U))
    prog, kept = sum_rate_program(instance.users, T, masks[1:])
    if prog.n_phases == 0:
        return 0.0, MultiFrameAllocation.zeros(U, T), SolveReport(Status.OPTIMAL, 0.0, 0.0, 0.0, 0)
    x, rep = prog.solve(tol=tol, max_iter=max_iter)
    if not rep.ok:
        raise SolverFailure(f"{U}-user hybrid solve was not certified optimal", rep)
    alloc = _lift(allocation_from_program(prog, kept, x, masks, T))
    value = subset_rate_bound(alloc, range(1, U + 1))
    profile = active_phase_profile(alloc, ACTIVE_PHASE * T)
    if not is_consecutive_profile(profile):
        found = _consecutive_optimum(instance, value, profile, tol, max_iter)
        if found is not None:
            return found
    return value, alloc, rep


def _consecutive_optimum(instance: MultiUserInstance, value: float, profile: set[int],
                         tol: float, max_iter: int):
    U, T = instance.n_users, instance.horizon
    masks = list(range(2 ** U))
    slack = max(tol * abs(value), 1e-9)
    # pairs covering the most used cardinalities first
    pairs = sorted(range(U), key=lambda n: -len({n, n + 1} & profile))
    for n in pairs:
        sub = [m for m in masks[1:] if bin(m).count("1") in (n, n + 1)]
        prog, kept = sum_rate_program(instance.users, T, sub)
        if prog.n_phases == 0:
            continue
        x, rep = prog.solve(tol=tol, max_iter=max_iter)
        if not rep.ok:
            continue
        alloc = _lift(allocation_from_program(prog, kept, x, masks, T))
        got = subset_rate_bound(alloc, range(1, U + 1))
        if got >= value - slack:
            return got, alloc, rep
    return None


def noma_sum_rate_multi(instance: MultiUserInstance) -> float:
    T = instance.horizon
    return T * math.log1p(full_frame_powers(instance.users, T).sum())


def tdma_sum_rate_multi(instance: MultiUserInstance, tol: float = DEFAULT_TOL
                        ) -> tuple[float, np.ndarray]:
    """Best solo windows for every user; returns ``(rate, durations)``."""
    T = instance.horizon
    F = [WindowedRate(u, T) for u in instance.users]
    w = allocate_time_equal_marginal(F, T)
    w = np.minimum(w, [f.peak_tau for f in F])
    return float(sum(f(t) for f, t in zip(F, w))), w


def tdma_allocation_multi(instance: MultiUserInstance, durations: np.ndarray) -> MultiFrameAllocation:
    U, T = instance.n_users, instance.horizon
    alloc = MultiFrameAllocation.zeros(U, T)
    for u, (user, t) in enumerate(zip(instance.users, durations)):
        if t <= 0:
            continue
        i = 1 << u
        d = discharge_at(user, t)
        alloc.durations[i] = t
        alloc.drawn_energy[i, u] = t * d
        alloc.transmit_energy[i, u] = t * max(eval_discharge(user.model, d) - user.circuit_cost, 0.0)
    alloc.durations[0] = max(T - alloc.durations[1:].sum(), 0.0)
    return alloc


def noma_allocation_multi(instance: MultiUserInstance) -> MultiFrameAllocation:
    U, T = instance.n_users, instance.horizon
    alloc = MultiFrameAllocation.zeros(U, T)
    full = 2 ** U - 1
    P = full_frame_powers(instance.users, T)
    alloc.durations[:] = 0.0
    alloc.durations[full] = T
    for u, user in enumerate(instance.users):
        if P[u] > 0:
            alloc.drawn_energy[full, u] = T * min(user.battery_energy / T, peak_discharge(user.model))
            alloc.transmit_energy[full, u] = T * P[u]
    return alloc


# ---------------------------------------------------------------------------
# structure
# ---------------------------------------------------------------------------
def subset_rate_bound(alloc: FrameAllocation, subset: Iterable[int]) -> float:
    """``sum_i tau_i ln(1 + sum_{u in S} E_i^u / tau_i)`` for 1-based user labels ``S``."""
    cols = [u - 1 for u in subset]
    if not cols:
        return 0.0
    total = 0.0
    for i, tau in enumerate(alloc.durations):
        if tau > 0:
            total += tau * math.log1p(alloc.transmit_energy[i, cols].sum() / tau)
    return total


def active_phase_profile(alloc: FrameAllocation, tau_threshold: float) -> set[int]:
    """Cardinalities of the non-idle phases whose duration exceeds the threshold."""
    out = set()
    for i, tau in enumerate(alloc.durations):
        if i and tau > tau_threshold:
            out.add(bin(i).count("1"))
    return out


def is_consecutive_profile(profile: set[int]) -> bool:
    """True when the profile is empty, one cardinality, or two adjacent ones."""
    if len(profile) <= 1:
        return True
    lo, hi = min(profile), max(profile)
    return len(profile) == 2 and hi == lo + 1


def theorem1_witness(n_users: int, battery_energy: float, resistance: float,
                     coefficient: float = 4.0 / 9.0, horizon: float = 1.0,
                     tol: float = DEFAULT_TOL) -> tuple[float, float, float]:
    """``(tdma, noma, hybrid)`` sum-rates in nats for identical zero-cost users.

    Requires ``U B / T <= D0`` so the discharge cap is not what makes TDMA lose.
    """
    if resistance < 0:
        raise PreconditionViolated("resistance must be >= 0")
    model = DischargeModel.ideal() if resistance == 0 else DischargeModel.quadratic(resistance, coefficient)
    d0 = peak_discharge(model)
    if n_users * battery_energy / horizon > d0:
        raise PreconditionViolated(
            f"U*B/T = {n_users * battery_energy / horizon:.6g} exceeds D0 = {d0:.6g}")
    inst = MultiUserInstance.identical(n_users, UserParams(battery_energy, 0.0, model), horizon)
    tdma, _ = tdma_sum_rate_multi(inst, tol)
    noma = noma_sum_rate_multi(inst)
    hybrid, _, _ = hybrid_sum_rate_multi(inst, tol)
    return tdma, noma, hybrid
