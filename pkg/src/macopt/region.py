"""Two-user rate-region boundaries for NOMA, TDMA and hybrid NOMA-TDMA.

The hybrid boundary runs from the user-2 axis to the user-1 axis through the
corners A, B, C, D:

* A: user 2 at its single-user optimum, user 1 as large as possible;
* B, C: ends of the maximum sum-rate segment, reached by time-sharing the
  two decoding orders in the shared phase;
* D: the mirror image of A.

The arcs AB and CD are traced through weighted sums ``R1 + R2 + mu * R_fav``,
which stay concave, with a bisection on ``mu`` that lands on each target rate.
All rates are in nats over the frame unless converted with :meth:`to_bits`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .battery import UserParams
from .convex import DEFAULT_TOL
from .exceptions import PeerInfeasible, SolverFailure, TargetOutOfRange
from .program import PerspectiveProgram, Phase
from .single_user import SingleUserProblem, WindowedRate, solve_p2
from .two_user import FrameAllocation, TwoUserInstance, full_frame_powers, hybrid_sum_rate

LN2 = math.log(2.0)


@dataclass(frozen=True)
class RatePoint:
    r1: float
    r2: float

    def __post_init__(self):
        if self.r1 < -1e-12 or self.r2 < -1e-12:
            raise ValueError(f"rates must be >= 0, got ({self.r1}, {self.r2})")

    @property
    def total(self) -> float:
        return self.r1 + self.r2

    def swapped(self) -> "RatePoint":
        return RatePoint(self.r2, self.r1)

    def scaled(self, factor: float) -> "RatePoint":
        return RatePoint(self.r1 * factor, self.r2 * factor)


def _point(r1: float, r2: float) -> RatePoint:
    # solver noise can leave rates a hair below zero
    return RatePoint(max(r1, 0.0), max(r2, 0.0))


@dataclass
class RegionBoundary:
    """Ordered boundary polyline from ``(0, C2)`` to ``(C1, 0)``."""

    points: np.ndarray  # shape (n, 2)
    labels: dict = field(default_factory=dict)  # name -> row index
    unit: str = "nats"
    strategy: str = ""

    def to_bits(self) -> "RegionBoundary":
        if self.unit == "bits":
            return self
        return RegionBoundary(self.points / LN2, dict(self.labels), "bits", self.strategy)

    def label_of(self, index: int) -> str:
        for name, i in self.labels.items():
            if i == index:
                return name
        return ""

    def max_sum(self) -> float:
        return float(self.points.sum(axis=1).max())

    def r2_at(self, r1: float) -> float:
        """Largest boundary ``r2`` at abscissa ``r1`` (``-inf`` past the end)."""
        p = self.points
        best = -math.inf
        if p.shape[0] == 1 and abs(r1 - p[0, 0]) <= 1e-12:
            return float(p[0, 1])
        for k in range(p.shape[0] - 1):
            x0, x1 = p[k, 0], p[k + 1, 0]
            if x0 - 1e-12 <= r1 <= x1 + 1e-12:
                if x1 - x0 <= 1e-15:
                    val = max(p[k, 1], p[k + 1, 1])
                else:
                    w = min(max((r1 - x0) / (x1 - x0), 0.0), 1.0)
                    val = p[k, 1] + w * (p[k + 1, 1] - p[k, 1])
                best = max(best, val)
        return best

    def is_monotone(self, tol: float = 1e-12) -> bool:
        d = np.diff(self.points, axis=0)
        return bool(np.all(d[:, 0] >= -tol) and np.all(d[:, 1] <= tol))

    def concavity_defect(self) -> float:
        """Largest amount by which a vertex falls below the chord of its neighbours."""
        p = self.points
        worst = 0.0
        for k in range(1, p.shape[0] - 1):
            a, b, c = p[k - 1], p[k], p[k + 1]
            if c[0] - a[0] <= 1e-15:
                continue
            w = (b[0] - a[0]) / (c[0] - a[0])
            worst = max(worst, a[1] + w * (c[1] - a[1]) - b[1])
        return worst


# ---------------------------------------------------------------------------
# hull
# ---------------------------------------------------------------------------
def upper_envelope(points: np.ndarray, eps: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Upper concave envelope of a point cloud in the first quadrant.

    Returns the envelope vertices (from the top of the r2 axis to the far end of
    the r1 axis) and, for every input point, the index of the envelope vertex
    nearest to it.  Points on an edge of the envelope are kept.
    """
    pts = np.asarray(points, dtype=np.float64)
    order = np.lexsort((-pts[:, 1], pts[:, 0]))
    # highest point per abscissa only, so collinear points cannot double back
    first = np.ones(order.shape[0], dtype=bool)
    first[1:] = pts[order[1:], 0] != pts[order[:-1], 0]
    hull: list[int] = []
    for i in order[first]:
        while len(hull) >= 2:
            o, a = pts[hull[-2]], pts[hull[-1]]
            cross = (a[0] - o[0]) * (pts[i, 1] - o[1]) - (a[1] - o[1]) * (pts[i, 0] - o[0])
            if cross > eps * max(1.0, abs(a[0]) + abs(a[1])):
                hull.pop()
            else:
                break
        hull.append(i)
    # vertical drop at the far end, e.g. from corner D down to (C1, 0)
    if pts[order[-1], 1] < pts[hull[-1], 1]:
        hull.append(order[-1])
    verts = pts[hull]
    # drop duplicates and anything after the r2 = 0 end or before the top
    keep = [0]
    for k in range(1, verts.shape[0]):
        if np.max(np.abs(verts[k] - verts[keep[-1]])) > 1e-14:
            keep.append(k)
    verts = verts[keep]
    top = int(np.argmax(verts[:, 1] - 1e-12 * verts[:, 0]))
    verts = verts[top:]
    nearest = np.array([int(np.argmin(np.abs(verts - p).sum(axis=1))) for p in pts])
    return verts, nearest


def _boundary(points: Sequence[RatePoint], labels: dict, strategy: str) -> RegionBoundary:
    arr = np.array([[p.r1, p.r2] for p in points], dtype=np.float64)
    verts, nearest = upper_envelope(arr)
    return RegionBoundary(verts, {k: int(nearest[i]) for k, i in labels.items()},
                          "nats", strategy)


# ---------------------------------------------------------------------------
# per-phase rates under a decoding order
# ---------------------------------------------------------------------------
def _phase_powers(alloc: FrameAllocation) -> tuple[np.ndarray, np.ndarray]:
    tau = alloc.durations
    P = np.zeros_like(alloc.transmit_energy)
    for i in range(tau.shape[0]):
        if tau[i] > 0:
            P[i] = alloc.transmit_energy[i] / tau[i]
    return tau, P


def rates_with_order(alloc: FrameAllocation, first: int) -> RatePoint:
    """User rates when user ``first`` (0 or 1) is decoded first in the shared phase."""
    tau, P = _phase_powers(alloc)
    other = 1 - first
    solo = [tau[1] * math.log1p(P[1, 0]), tau[2] * math.log1p(P[2, 1])]
    shared = [0.0, 0.0]
    shared[first] = tau[3] * math.log1p(P[3, first] / (1.0 + P[3, other]))
    shared[other] = tau[3] * math.log1p(P[3, other])
    return _point(solo[0] + shared[0], solo[1] + shared[1])


def sum_segment_point(instance: TwoUserInstance, alloc: FrameAllocation, alpha: float) -> RatePoint:
    """Point on the constant-sum segment: share ``alpha`` of the shared phase decodes user 1 first.

    ``alpha = 1`` gives corner B and ``alpha = 0`` gives corner C.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    b = rates_with_order(alloc, first=0)
    c = rates_with_order(alloc, first=1)
    return _point(alpha * b.r1 + (1 - alpha) * c.r1, alpha * b.r2 + (1 - alpha) * c.r2)


# ---------------------------------------------------------------------------
# corners A and D
# ---------------------------------------------------------------------------
def corner_peer_max(instance: TwoUserInstance, maximizing_user: int,
                    tol: float = DEFAULT_TOL) -> RatePoint:
    """Corner A (``maximizing_user=1``) or D (``maximizing_user=2``).

    The peer keeps its single-user optimum: constant power ``Pc`` over ``tau_c``.
    The maximising user may transmit alone outside that window and, inside it,
    underneath the peer, decoded first so the peer's signal acts as noise.
    """
    if maximizing_user not in (1, 2):
        raise ValueError("maximizing_user must be 1 or 2")
    me, peer = maximizing_user - 1, 2 - maximizing_user
    T = instance.horizon
    peer_user = instance.users[peer]
    if not peer_user.can_transmit():
        raise PeerInfeasible(f"user {peer + 1} cannot power its circuit")
    ps = solve_p2(SingleUserProblem(peer_user, T))
    tau_c, pc = ps.duration, ps.transmit_power
    user = instance.users[me]
    mine = 0.0
    if user.can_transmit():
        phases, shared = [], []
        if T - tau_c > 1e-12 * T:
            phases.append(Phase((0,), T - tau_c))
            shared.append(False)
        if tau_c > 1e-12 * T:
            phases.append(Phase((0,), tau_c))
            shared.append(True)
        prog = PerspectiveProgram([user], phases, T)
        for p, is_shared in enumerate(shared):
            if is_shared:
                prog.add_term(p, (0,), base=1.0 + pc)
                prog.lin[p] -= math.log1p(pc)
            else:
                prog.add_term(p, (0,))
        x, rep = prog.solve(tol=tol)
        if not rep.ok:
            raise SolverFailure("peer-max corner solve was not certified optimal", rep)
        mine = rep.objective
    pt = [0.0, 0.0]
    pt[me], pt[peer] = mine, ps.rate
    return _point(*pt)


# ---------------------------------------------------------------------------
# arcs
# ---------------------------------------------------------------------------
class _WeightedSum:
    """Solves ``max R1 + R2 + mu * R_fav`` with the peer decoded first in the shared phase."""

    def __init__(self, instance: TwoUserInstance, favored: int, tol: float):
        self.instance = instance
        self.favored = favored
        self.tol = tol
        self.cache: dict[float, RatePoint] = {}

    def __call__(self, mu: float) -> RatePoint:
        if mu in self.cache:
            return self.cache[mu]
        inst, fav = self.instance, self.favored
        phases = [Phase((0,)), Phase((1,)), Phase((0, 1))]
        prog = PerspectiveProgram(list(inst.users), phases, inst.horizon)
        prog.add_term(0, (0,), weight=1.0 + (mu if fav == 0 else 0.0))
        prog.add_term(1, (1,), weight=1.0 + (mu if fav == 1 else 0.0))
        prog.add_term(2, (0, 1))
        if mu > 0:
            prog.add_term(2, (fav,), weight=mu)
        x, rep = prog.solve(tol=self.tol)
        if not rep.ok:
            raise SolverFailure(f"weighted-sum solve (mu={mu:.6g}) was not certified", rep)
        T = inst.horizon
        tau = np.zeros(4)
        E = np.zeros((4, 2))
        tx = prog.transmit_energy(x)
        for p, ph in enumerate(phases):
            tau[p + 1] = max(x[p], 0.0)
            for u in ph.members:
                E[p + 1, u] = tx[(p, u)]
        tau[0] = max(T - tau[1:].sum(), 0.0)
        alloc = FrameAllocation(tau, np.zeros((4, 2)), E)
        pt = rates_with_order(alloc, first=1 - fav)
        self.cache[mu] = pt
        return pt


def _fav(pt: RatePoint, fav: int) -> float:
    return pt.r1 if fav == 0 else pt.r2


def _lerp(a: RatePoint, b: RatePoint, target: float, fav: int) -> RatePoint:
    fa, fb = _fav(a, fav), _fav(b, fav)
    w = 0.0 if fb - fa <= 1e-15 else min(max((target - fa) / (fb - fa), 0.0), 1.0)
    return _point(a.r1 + w * (b.r1 - a.r1), a.r2 + w * (b.r2 - a.r2))


def boundary_arc(instance: TwoUserInstance, decode_first: int, targets: Sequence[float],
                 tol: float = DEFAULT_TOL, *, start: RatePoint | None = None,
                 end: RatePoint | None = None, rate_tol: float = 1e-10) -> list[RatePoint]:
    """Boundary points between the max-sum segment and a peer-max corner.

    ``decode_first`` is the user decoded first in the shared phase; the other
    user (the favoured one) sees no interference there.  ``decode_first=2``
    traces the arc CD with ``targets`` giving user-1 rates; ``decode_first=1``
    traces AB with ``targets`` giving user-2 rates.  ``start`` (C or B) and
    ``end`` (D or A) are computed when not supplied.
    """
    if decode_first not in (1, 2):
        raise ValueError("decode_first must be 1 or 2")
    fav = 2 - decode_first  # 0-based index of the favoured user
    if start is None:
        _, alloc, _ = hybrid_sum_rate(instance, tol)
        start = sum_segment_point(instance, alloc, 0.0 if fav == 0 else 1.0)
    if end is None:
        end = corner_peer_max(instance, 2 if fav == 0 else 1, tol)
    lo_rate, hi_rate = _fav(start, fav), _fav(end, fav)
    slack = 1e-9 * max(1.0, hi_rate)
    solve = _WeightedSum(instance, fav, tol)
    out = []
    for t in targets:
        if not lo_rate - slack <= t <= hi_rate + slack:
            raise TargetOutOfRange(f"target {t:.9g} outside [{lo_rate:.9g}, {hi_rate:.9g}]")
        out.append(_hit_target(solve, start, end, min(max(t, lo_rate), hi_rate), fav, rate_tol))
    sums = [p.total for p in sorted(out, key=lambda p: _fav(p, fav))]
    if any(b > a + 1e-7 for a, b in zip(sums, sums[1:])):
        raise SolverFailure("max sum-rate increased along an arc; boundary is not concave")
    return out


def _hit_target(solve: _WeightedSum, start: RatePoint, end: RatePoint, target: float,
                fav: int, rate_tol: float) -> RatePoint:
    # bracket with the cached weights closest to the target
    lo_mu, lo_pt = 0.0, start
    hi_mu, hi_pt = math.inf, end
    for mu, pt in solve.cache.items():
        f = _fav(pt, fav)
        if f <= target and mu >= lo_mu:
            lo_mu, lo_pt = mu, pt
        if f >= target and mu <= hi_mu:
            hi_mu, hi_pt = mu, pt
    if math.isinf(hi_mu):
        mu = max(1.0, 2.0 * lo_mu)
        while mu <= 1e8:
            pt = solve(mu)
            if _fav(pt, fav) >= target:
                hi_mu, hi_pt = mu, pt
                break
            lo_mu, lo_pt = mu, pt
            mu *= 4.0
    for _ in range(100):
        if _fav(hi_pt, fav) - _fav(lo_pt, fav) <= rate_tol or math.isinf(hi_mu):
            break
        if hi_mu - lo_mu <= 1e-12 * max(1.0, hi_mu):
            break  # a flat piece of boundary: the chord is exact
        mid = math.sqrt(lo_mu * hi_mu) if lo_mu > 0 else hi_mu / 8.0
        pt = solve(mid)
        if _fav(pt, fav) <= target:
            lo_mu, lo_pt = mid, pt
        else:
            hi_mu, hi_pt = mid, pt
    return _lerp(lo_pt, hi_pt, target, fav)


# ---------------------------------------------------------------------------
# whole regions
# ---------------------------------------------------------------------------
def single_user_caps(instance: TwoUserInstance) -> tuple[float, float]:
    T = instance.horizon
    return tuple(solve_p2(SingleUserProblem(u, T)).rate for u in instance.users)  # type: ignore


def noma_region(instance: TwoUserInstance) -> RegionBoundary:
    T = instance.horizon
    P1, P2 = full_frame_powers(instance.users, T)
    pts = [_point(0.0, T * math.log1p(P2)),
           _point(T * math.log1p(P1 / (1 + P2)), T * math.log1p(P2)),
           _point(T * math.log1p(P1), T * math.log1p(P2 / (1 + P1))),
           _point(T * math.log1p(P1), 0.0)]
    return _boundary(pts, {"corner2": 1, "corner1": 2}, "noma")


def tdma_region(instance: TwoUserInstance, n_points: int = 201) -> RegionBoundary:
    """Hull of ``(F1(sT), F2((1-s)T))`` over split ratios ``s``."""
    T = instance.horizon
    F1, F2 = (WindowedRate(u, T) for u in instance.users)
    pts = [_point(F1(s * T), F2((1 - s) * T)) for s in np.linspace(0.0, 1.0, n_points)]
    pts.append(_point(F1(T), 0.0))
    pts.insert(0, _point(0.0, F2(T)))
    return _boundary(pts, {}, "tdma")


def hybrid_region(instance: TwoUserInstance, n_arc_points: int = 25,
                  tol: float = DEFAULT_TOL) -> RegionBoundary:
    c1, c2 = single_user_caps(instance)
    if not all(u.can_transmit() for u in instance.users):
        return _boundary([_point(0.0, c2), _point(c1, 0.0)], {}, "hybrid")
    _, alloc, _ = hybrid_sum_rate(instance, tol)
    B = sum_segment_point(instance, alloc, 1.0)
    C = sum_segment_point(instance, alloc, 0.0)
    A = corner_peer_max(instance, 1, tol)
    D = corner_peer_max(instance, 2, tol)
    ab, cd = [], []
    if n_arc_points > 0:
        if A.r2 > B.r2:
            ts = np.linspace(B.r2, A.r2, n_arc_points + 2)[1:-1]
            ab = boundary_arc(instance, 1, ts, tol, start=B, end=A)
        if D.r1 > C.r1:
            ts = np.linspace(C.r1, D.r1, n_arc_points + 2)[1:-1]
            cd = boundary_arc(instance, 2, ts, tol, start=C, end=D)
    ab.sort(key=lambda p: p.r1)
    cd.sort(key=lambda p: p.r1)
    pts = [_point(0.0, c2), A, *ab, B, C, *cd, D, _point(c1, 0.0)]
    labels = {"A": 1, "B": 2 + len(ab), "C": 3 + len(ab), "D": 4 + len(ab) + len(cd)}
    return _boundary(pts, labels, "hybrid")


def trace_region(instance: TwoUserInstance, n_arc_points: int = 25, strategy: str = "hybrid",
                 tol: float = DEFAULT_TOL) -> RegionBoundary:
    strategy = strategy.lower()
    if strategy == "hybrid":
        return hybrid_region(instance, n_arc_points, tol)
    if strategy == "noma":
        return noma_region(instance)
    if strategy == "tdma":
        return tdma_region(instance, max(8 * n_arc_points + 1, 201))
    raise ValueError(f"unknown strategy {strategy!r}")


def containment_gap(outer: RegionBoundary, inner: RegionBoundary, n_samples: int = 50) -> float:
    """Largest amount by which ``inner`` pokes out of ``outer`` at sampled abscissas.

    Abscissas are spread evenly over ``inner``'s r1 range; a non-positive result
    means containment.
    """
    hi = float(inner.points[:, 0].max())
    worst = -math.inf
    for x in np.linspace(0.0, hi, n_samples):
        worst = max(worst, inner.r2_at(x) - outer.r2_at(x))
    return worst
