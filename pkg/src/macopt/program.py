"""Perspective programs over phase-structured transmission frames.

A frame is split into phases; each phase has a duration variable ``tau`` and,
for every member user, a drawn-energy variable ``e``.  Transmit energies are
eliminated by binding ``E = tau * (g(e / tau) - gamma)``, so every rate term is
a perspective ``tau * ln(base + sum_u (g_u(e_u / tau) - gamma_u))`` and every
constraint is linear:

* ``sum(tau) <= T`` and per-phase duration caps,
* ``sum_phases e_u <= B_u`` for each user,
* ``e_u <= tau * D0_u`` (peak discharge),
* ``e_u >= tau * d_min_u`` where ``g(d_min_u) = gamma_u``.  An active user must
  at least power its circuit; this keeps every log argument >= base and the
  program concave.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .battery import UserParams, eval_discharge
from .convex import DEFAULT_MAX_ITER, DEFAULT_TOL, FEAS_TOL, LinearConstraintSet, \
    SolveReport, Status, kkt_fit, maximize_concave_linear
from .exceptions import NonFiniteObjective

DEAD_PHASE = 1e-8  # relative to the horizon


@dataclass
class Phase:
    members: tuple[int, ...]
    tau_cap: float = math.inf


@dataclass
class PerspectiveProgram:
    """Concave program ``max sum_k w_k * term_k + lin @ x`` over a polytope."""

    users: Sequence[UserParams]
    phases: list[Phase]
    horizon: float
    energy: np.ndarray = None  # per-user energy budgets (defaults to B_u)
    terms: list = field(default_factory=list)
    lin: np.ndarray = None

    def __post_init__(self):
        self.n_phases = len(self.phases)
        self.evar = {}  # (phase, user) -> variable index
        k = self.n_phases
        for p, ph in enumerate(self.phases):
            for u in ph.members:
                self.evar[(p, u)] = k
                k += 1
        self.n = k
        if self.energy is None:
            self.energy = np.array([u.battery_energy for u in self.users], dtype=np.float64)
        if self.lin is None:
            self.lin = np.zeros(self.n)
        self._pack_users()
        self.cons = self._constraints()
        self._compiled = None

    # -- construction -----------------------------------------------------
    def _pack_users(self):
        U = len(self.users)
        params = [u.model.kernel_params() for u in self.users]
        width = max(p[2].shape[0] for p in params)
        self.ukind = np.array([p[0] for p in params], dtype=np.int64)
        self.ua = np.array([p[1] for p in params], dtype=np.float64)
        self.ugamma = np.array([u.circuit_cost for u in self.users], dtype=np.float64)
        self.tabx = np.zeros((U, width))
        self.taby = np.zeros((U, width))
        self.tabn = np.array([p[2].shape[0] for p in params], dtype=np.int64)
        for i, p in enumerate(params):
            self.tabx[i, :p[2].shape[0]] = p[2]
            self.taby[i, :p[3].shape[0]] = p[3]
        self.d0 = np.array([u.peak_discharge for u in self.users])
        floors = [u.min_active_discharge for u in self.users]
        for (p, u) in self.evar:
            if floors[u] is None:
                raise ValueError(f"user {u} cannot power its circuit and may not join phase {p}")
        self.dmin = np.array([math.nan if f is None else f for f in floors], dtype=np.float64)

    def _constraints(self) -> LinearConstraintSet:
        n = self.n
        rows, rhs = [], []
        row = np.zeros(n)
        row[:self.n_phases] = 1.0
        rows.append(row)
        rhs.append(self.horizon)
        for u in range(len(self.users)):
            row = np.zeros(n)
            idx = [v for (p, uu), v in self.evar.items() if uu == u]
            if not idx:
                continue
            row[idx] = 1.0
            rows.append(row)
            rhs.append(self.energy[u])
        for (p, u), v in self.evar.items():
            if math.isfinite(self.d0[u]):
                row = np.zeros(n)
                row[v] = 1.0
                row[p] = -self.d0[u]
                rows.append(row)
                rhs.append(0.0)
            if self.dmin[u] > 0:
                row = np.zeros(n)
                row[v] = -1.0
                row[p] = self.dmin[u]
                rows.append(row)
                rhs.append(0.0)
        upper = np.full(n, np.inf)
        upper[:self.n_phases] = [min(ph.tau_cap, self.horizon) for ph in self.phases]
        return LinearConstraintSet(np.zeros(n), upper, np.array(rows), np.array(rhs))

    def add_term(self, phase: int, members: Sequence[int], weight: float = 1.0,
                 base: float = 1.0):
        """Add ``weight * tau_p * ln(base + sum_{u in members} P_u)``."""
        if weight < 0:
            raise ValueError("term weights must be >= 0 to keep the program concave")
        self.terms.append((float(weight), phase, float(base),
                           [(self.evar[(phase, u)], u) for u in members]))
        self._compiled = None

    def _arrays(self):
        if self._compiled is None:
            w = np.array([t[0] for t in self.terms], dtype=np.float64)
            tau = np.array([t[1] for t in self.terms], dtype=np.int64)
            base = np.array([t[2] for t in self.terms], dtype=np.float64)
            ptr = np.zeros(len(self.terms) + 1, dtype=np.int64)
            ev, eu = [], []
            for k, t in enumerate(self.terms):
                ptr[k + 1] = ptr[k] + len(t[3])
                ev.extend(v for v, _ in t[3])
                eu.extend(u for _, u in t[3])
            self._compiled = (w, tau, base, ptr, np.array(ev, dtype=np.int64),
                              np.array(eu, dtype=np.int64))
        return self._compiled

    # -- evaluation -------------------------------------------------------
    def evaluate(self, x: np.ndarray, want_hess: bool = False):
        w, tau, base, ptr, ev, eu = self._arrays()
        f, g, H, ok = kernels.perspective_eval(
            np.ascontiguousarray(x, dtype=np.float64), w, tau, base, ptr, ev, eu,
            self.ukind, self.ua, self.ugamma, self.tabx, self.taby, self.tabn,
            self.lin, want_hess)
        if not ok:
            f = -math.inf
        return f, g, H

    def value_and_grad(self, x):
        f, g, _ = self.evaluate(x)
        return f, g

    def hessian(self, x):
        return self.evaluate(x, want_hess=True)[2]

    def term_values(self, x, members_filter=None) -> np.ndarray:
        """Per-term unweighted values ``tau * ln(base + ...)``."""
        _, tau, base, ptr, ev, eu = self._arrays()
        return kernels.term_values(np.ascontiguousarray(x, dtype=np.float64), tau, base, ptr,
                                   ev, eu, self.ukind, self.ua, self.ugamma, self.tabx,
                                   self.taby, self.tabn)

    # -- solving ----------------------------------------------------------
    def interior_start(self) -> np.ndarray:
        """A strictly feasible point (all slacks positive)."""
        x = np.zeros(self.n)
        ratio = np.empty(len(self.users))
        for u in range(len(self.users)):
            lo = self.dmin[u]
            hi = self.d0[u] if math.isfinite(self.d0[u]) else lo + max(1.0, lo)
            ratio[u] = 0.5 * (lo + hi)
        load = np.zeros(len(self.users))
        for (p, u) in self.evar:
            load[u] += ratio[u]
        scale = 0.5 * self.horizon / max(self.n_phases, 1)
        caps = [ph.tau_cap for ph in self.phases]
        scale = min([scale] + [0.5 * c for c in caps])
        for u in range(len(self.users)):
            if load[u] > 0:
                scale = min(scale, 0.5 * self.energy[u] / load[u])
        x[:self.n_phases] = scale
        for (p, u), v in self.evar.items():
            x[v] = scale * ratio[u]
        return x

    def solve(self, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
              x0: np.ndarray | None = None) -> tuple[np.ndarray, SolveReport]:
        if x0 is None:
            x0 = self.interior_start()
        x, rep = maximize_concave_linear(self.value_and_grad, self.cons, x0, tol=tol,
                                         max_iter=max_iter, method="barrier", hess=self.hessian)
        return x, self.certify(x, rep.iterations, tol)

    # -- certification ----------------------------------------------------
    def certify(self, x: np.ndarray, iterations: int = 0, tol: float = DEFAULT_TOL) -> SolveReport:
        """KKT certificate that copes with phases shrunk to zero length.

        A phase with ``tau = 0`` sits on the apex of its perspective cone where the
        objective is not differentiable, so the gradient there is meaningless.
        Such phases are removed and the remaining program is checked with the usual
        residual; the multipliers found are then used to price each removed phase:
        opening it for a short time must not pay, i.e. the best value per second
        ``max_rho phi(rho) - lambda_T - sum_u lambda_u rho_u`` must be ``<= 0``.
        Stationarity is the larger of the two residuals.
        """
        f, g = self.value_and_grad(x)
        if not (math.isfinite(f) and np.all(np.isfinite(g))):
            raise NonFiniteObjective("objective or gradient not finite at the returned point")
        G, h = self.cons.as_inequalities()
        feas = float(max(0.0, -(h - G @ x).min()))
        dead = [p for p in range(self.n_phases) if x[p] <= DEAD_PHASE * self.horizon]
        live_cols = np.ones(self.n, dtype=bool)
        for p in dead:
            live_cols[p] = False
            for u in self.phases[p].members:
                live_cols[self.evar[(p, u)]] = False
        Gl = G[:, live_cols]
        keep = np.any(Gl != 0.0, axis=1)
        stat, _, lam = kkt_fit(g[live_cols], Gl[keep], h[keep], x[live_cols])
        lam_rows = np.zeros(G.shape[0])
        lam_rows[keep] = lam
        # rows 0 .. k of G are the time row followed by the energy rows
        lam_time = lam_rows[0]
        lam_energy = np.zeros(len(self.users))
        k = 1
        for u in range(len(self.users)):
            if any(uu == u for (_, uu) in self.evar):
                lam_energy[u] = lam_rows[k]
                k += 1
        for p in dead:
            stat = max(stat, self.phase_price(p, lam_time, lam_energy))
        status = Status.OPTIMAL if stat <= tol and feas <= FEAS_TOL else Status.MAX_ITERATIONS
        return SolveReport(status, float(f), float(stat), feas, iterations)

    def _phase_arrays(self, p: int):
        members = self.phases[p].members
        pos = {u: 1 + i for i, u in enumerate(members)}
        sel = [t for t in self.terms if t[1] == p]
        w = np.array([t[0] for t in sel], dtype=np.float64)
        tau = np.zeros(len(sel), dtype=np.int64)
        base = np.array([t[2] for t in sel], dtype=np.float64)
        ptr = np.zeros(len(sel) + 1, dtype=np.int64)
        ev, eu = [], []
        for k, t in enumerate(sel):
            ptr[k + 1] = ptr[k] + len(t[3])
            ev.extend(pos[u] for _, u in t[3])
            eu.extend(u for _, u in t[3])
        lin = np.concatenate([[self.lin[p]], [self.lin[self.evar[(p, u)]] for u in members]])
        return w, tau, base, ptr, np.array(ev, dtype=np.int64), np.array(eu, dtype=np.int64), lin

    def phase_price(self, p: int, lam_time: float, lam_energy: np.ndarray) -> float:
        """Best net value per second of opening phase ``p`` (positive means it pays)."""
        members = self.phases[p].members
        w, tau, base, ptr, ev, eu, lin = self._phase_arrays(p)
        if not members:
            return max(0.0, float(lin[0]) - lam_time)
        price = lam_energy[list(members)]
        lo = self.dmin[list(members)]
        hi = self.d0[list(members)].copy()
        for i, u in enumerate(members):
            if not math.isfinite(hi[i]):
                hi[i] = lo[i] + 10.0 + (10.0 / price[i] if price[i] > 0 else 1e6)

        def ev_at(rho, want_hess):
            z = np.concatenate([[1.0], rho])
            f, gr, H, ok = kernels.perspective_eval(
                z, w, tau, base, ptr, ev, eu, self.ukind, self.ua, self.ugamma,
                self.tabx, self.taby, self.tabn, lin, want_hess)
            if not ok:
                return -math.inf, gr[1:] - price, H
            return f - lam_time - price @ rho, gr[1:] - price, H

        box = LinearConstraintSet(lo, hi, np.zeros((0, len(members))), np.zeros(0))
        rho0 = 0.5 * (lo + hi)
        rho, rep = maximize_concave_linear(lambda r: ev_at(r, False)[:2], box, rho0,
                                           method="barrier",
                                           hess=lambda r: ev_at(r, True)[2][1:, 1:])
        return max(0.0, rep.objective)

    def fixed_durations(self, durations: np.ndarray) -> "FixedDurationProgram":
        return FixedDurationProgram(self, np.asarray(durations, dtype=np.float64))

    # -- post-processing --------------------------------------------------
    def transmit_energy(self, x: np.ndarray) -> dict:
        """``E = tau * max(g(e / tau) - gamma, 0)`` for every (phase, user) variable."""
        out = {}
        for (p, u), v in self.evar.items():
            tau = x[p]
            if tau <= kernels.TAU_FLOOR:
                out[(p, u)] = 0.0
                continue
            ratio = max(x[v], 0.0) / tau
            d0 = self.d0[u]
            if math.isfinite(d0):
                ratio = min(ratio, d0)
            out[(p, u)] = tau * max(eval_discharge(self.users[u].model, ratio)
                                    - self.users[u].circuit_cost, 0.0)
        return out


class FixedDurationProgram:
    """The energy-only subproblem of a :class:`PerspectiveProgram` with ``tau`` fixed.

    Phases with zero duration are dropped together with their energy variables.
    """

    def __init__(self, program: PerspectiveProgram, durations: np.ndarray):
        self.program = program
        self.durations = durations
        live = durations > 0
        self.free = np.array([v for (p, u), v in program.evar.items() if live[p]], dtype=np.int64)
        self.owner = [(p, u) for (p, u), v in program.evar.items() if live[p]]
        m = self.free.shape[0]
        rows, rhs = [], []
        lower = np.zeros(m)
        upper = np.full(m, np.inf)
        for k, (p, u) in enumerate(self.owner):
            lower[k] = program.dmin[u] * durations[p]
            if math.isfinite(program.d0[u]):
                upper[k] = program.d0[u] * durations[p]
        for u in range(len(program.users)):
            row = np.zeros(m)
            idx = [k for k, (p, uu) in enumerate(self.owner) if uu == u]
            if idx:
                row[idx] = 1.0
                rows.append(row)
                rhs.append(program.energy[u])
        self.cons = LinearConstraintSet(lower, upper, np.array(rows, dtype=np.float64).reshape(len(rows), m),
                                       np.array(rhs, dtype=np.float64))

    def is_feasible(self) -> bool:
        for u in range(len(self.program.users)):
            need = sum(self.cons.lower[k] for k, (p, uu) in enumerate(self.owner) if uu == u)
            if need > self.program.energy[u] * (1 + 1e-12):
                return False
        return bool(np.all(self.cons.lower <= self.cons.upper))

    def _full(self, z):
        x = np.zeros(self.program.n)
        x[:self.program.n_phases] = self.durations
        x[self.free] = z
        return x

    def value_and_grad(self, z):
        f, g, _ = self.program.evaluate(self._full(z))
        return f, g[self.free]

    def hessian(self, z):
        H = self.program.evaluate(self._full(z), want_hess=True)[2]
        return H[np.ix_(self.free, self.free)]

    def interior_start(self) -> np.ndarray:
        z = np.empty(self.free.shape[0])
        prog = self.program
        for u in range(len(prog.users)):
            idx = [k for k, (p, uu) in enumerate(self.owner) if uu == u]
            if not idx:
                continue
            lo = self.cons.lower[idx]
            hi = self.cons.upper[idx]
            width = np.where(np.isfinite(hi), hi - lo, np.maximum(1.0, lo) + 1.0)
            room = prog.energy[u] - lo.sum()
            frac = min(0.5, 0.5 * room / width.sum()) if width.sum() > 0 else 0.0
            z[idx] = lo + frac * width
        return z

    def solve(self, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER):
        """Return ``(value, report)``; an empty energy vector is evaluated directly."""
        if self.free.shape[0] == 0:
            f = self.program.value_and_grad(self._full(np.zeros(0)))[0]
            return f, None
        z, rep = maximize_concave_linear(self.value_and_grad, self.cons, self.interior_start(),
                                         tol=tol, max_iter=max_iter, method="barrier",
                                         hess=self.hessian)
        return rep.objective, rep


def sum_rate_program(users: Sequence[UserParams], horizon: float,
                     masks: Sequence[int]) -> tuple[PerspectiveProgram, list[int]]:
    """Sum-rate program over the phases given as user bitmasks.

    Phases that contain a user unable to power its circuit are dropped (the same
    subset without that user is another phase).  Returns the program and, per program phase, the
    original bitmask it came from.
    """
    able = [u.can_transmit() for u in users]
    phases, kept = [], []
    for m in masks:
        members = tuple(u for u in range(len(users)) if m >> u & 1 and able[u])
        if members and members == tuple(u for u in range(len(users)) if m >> u & 1):
            phases.append(Phase(members))
            kept.append(m)
    prog = PerspectiveProgram(users, phases, horizon)
    for p, ph in enumerate(phases):
        prog.add_term(p, ph.members)
    return prog, kept
