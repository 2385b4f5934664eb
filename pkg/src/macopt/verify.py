"""Built-in property suites used by ``macopt verify`` and the acceptance tests.

Each suite builds its own instances from a fixed seed, so results are
reproducible run to run.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .battery import DischargeModel, UserParams
from .multi_user import (MultiUserInstance, active_phase_profile, hybrid_sum_rate_multi,
                         is_consecutive_profile, theorem1_witness)
from .single_user import SingleUserProblem, brute_force_p1, check_linearity_in_B, solve_p2
from .two_user import TwoUserInstance, brute_force_hybrid, hybrid_sum_rate

LN2 = math.log(2.0)
SEED = 20240611
RESISTANCES = tuple(round(0.1 * k, 1) for k in range(1, 11))


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    limit: float
    detail: str = ""


@dataclass
class SuiteResult:
    suite: str
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    def add(self, name, passed, value, limit, detail=""):
        self.checks.append(Check(name, bool(passed), float(value), float(limit), detail))

    def to_dict(self) -> dict:
        return {"suite": self.suite, "passed": self.passed,
                "checks": [asdict(c) for c in self.checks]}


def random_user(rng: np.random.Generator, r_range=(0.0, 1.0), b_range=(0.1, 5.0),
                g_range=(0.0, 1.0)) -> UserParams:
    r = float(rng.uniform(*r_range))
    model = DischargeModel.ideal() if r == 0 else DischargeModel.quadratic(r)
    return UserParams(float(rng.uniform(*b_range)), float(rng.uniform(*g_range)), model)


# ---------------------------------------------------------------------------
def lemma1(n_instances: int = 50, grid: int = 2000, limit: float = 2e-3,
           seed: int = SEED) -> SuiteResult:
    """Reduced single-user search against a direct ``(tau, d)`` grid."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("lemma1")
    for k in range(n_instances):
        user = random_user(rng)
        prob = SingleUserProblem(user, float(rng.uniform(0.5, 2.0)))
        fast, slow = solve_p2(prob), brute_force_p1(prob, grid)
        gap = abs(fast.rate - slow.rate)
        res.add(f"instance {k}", gap <= limit and fast.rate >= slow.rate - 1e-9, gap, limit,
                f"B={user.battery_energy:.4g} gamma={user.circuit_cost:.4g} "
                f"r={user.model.resistance:.4g} T={prob.horizon:.4g}")
    return res


def prop1(energies=(0.5, 1.0, 1.5, 2.0), limit: float = 1e-4) -> SuiteResult:
    """Optimal discharge ``B / tau*`` does not depend on ``B`` while the optimum is interior."""
    res = SuiteResult("prop1")
    template = SingleUserProblem(UserParams(1.0, 0.5, DischargeModel.ideal()), 10.0)
    rep = check_linearity_in_B(template, list(energies), limit)
    res.add("discharge spread", rep.passed, rep.spread, limit, "; ".join(rep.notes))
    return res


def _witness_suite(name: str, n_users: int, energy: float, margin_bits: float) -> SuiteResult:
    res = SuiteResult(name)
    for r in RESISTANCES:
        tdma, noma, hybrid = (v / LN2 for v in theorem1_witness(n_users, energy, r))
        res.add(f"U={n_users} r={r} noma-tdma", noma - tdma > margin_bits, noma - tdma, margin_bits)
        res.add(f"U={n_users} r={r} hybrid-noma", hybrid >= noma - 1e-6, hybrid - noma, -1e-6)
    return res


def lemma2(energy: float = 0.3, margin_bits: float = 1e-4) -> SuiteResult:
    """Zero circuit cost, identical lossy users: TDMA strictly below NOMA, two users."""
    return _witness_suite("lemma2", 2, energy, margin_bits)


def theorem1(energy: float = 0.3, margin_bits: float = 1e-4) -> SuiteResult:
    """The same ordering for three users."""
    return _witness_suite("theorem1", 3, energy, margin_bits)


def prop2(n_instances: int = 10, seed: int = SEED) -> SuiteResult:
    """Active phases of a hybrid optimum have at most two adjacent cardinalities."""
    rng = np.random.default_rng(seed + 2)
    res = SuiteResult("prop2")
    for k in range(n_instances):
        n = 2 if k % 2 == 0 else 3
        users = [random_user(rng, b_range=(0.5, 2.0)) for _ in range(n)]
        inst = MultiUserInstance(tuple(users), 1.0)
        _, alloc, rep = hybrid_sum_rate_multi(inst)
        prof = active_phase_profile(alloc, 1e-6 * inst.horizon)
        res.add(f"instance {k} (U={n})", rep.ok and is_consecutive_profile(prof),
                len(prof), 2, f"profile={sorted(prof)}")
    return res


def oracle(n_instances: int = 3, resolution: int = 20, limit_bits: float = 5e-3,
           seed: int = SEED) -> SuiteResult:
    """Hybrid solver against a duration grid with exact inner energy allocation."""
    rng = np.random.default_rng(seed + 3)
    res = SuiteResult("oracle")
    for k in range(n_instances):
        users = tuple(random_user(rng, b_range=(0.5, 2.0), g_range=(0.0, 0.8)) for _ in range(2))
        inst = TwoUserInstance(users, 1.0)
        h, _, rep = hybrid_sum_rate(inst)
        b = brute_force_hybrid(inst, resolution)
        below = (h - b) / LN2
        res.add(f"instance {k}", rep.ok and -1e-6 <= below <= limit_bits, below, limit_bits)
    return res


SUITES = {"lemma1": lemma1, "prop1": prop1, "lemma2": lemma2, "theorem1": theorem1,
          "prop2": prop2, "oracle": oracle}
