"""Scenario files: JSON in, validated instances out.

Example::

    {
      "users": [{"battery_energy": 1.25, "circuit_cost": 0.5,
                 "model": {"kind": "quadratic", "resistance": 0.3}}],
      "horizon": 1.0,
      "strategy": "all",
      "rate_unit": "bits",
      "solver": {"tolerance": 1e-6, "max_iter": 100000}
    }

Unknown keys anywhere are an error.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .battery import DischargeModel, UserParams
from .convex import DEFAULT_MAX_ITER, DEFAULT_TOL
from .exceptions import ConfigError, MacoptError

STRATEGIES = ("noma", "tdma", "hybrid", "all")
UNITS = ("bits", "nats")
_TOP_KEYS = {"users", "horizon", "strategy", "rate_unit", "solver", "sweep"}
_SOLVER_KEYS = {"tolerance", "max_iter"}
_SWEEP_KEYS = {"r_values"}


@dataclass(frozen=True)
class SolverSettings:
    tolerance: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER


@dataclass(frozen=True)
class ScenarioConfig:
    users: tuple[UserParams, ...]
    horizon: float = 1.0
    strategy: str = "all"
    rate_unit: str = "bits"
    solver: SolverSettings = field(default_factory=SolverSettings)
    r_values: tuple[float, ...] | None = None

    def strategies(self) -> list[str]:
        return ["noma", "tdma", "hybrid"] if self.strategy == "all" else [self.strategy]

    def with_resistance(self, r: float) -> "ScenarioConfig":
        """Same scenario with every quadratic/ideal user set to resistance ``r``."""
        users = []
        for u in self.users:
            m = u.model
            if m.kind.value == "tabulated":
                raise ConfigError("cannot sweep the resistance of a tabulated discharge model")
            new = DischargeModel.ideal() if r == 0 else DischargeModel.quadratic(r, m.coefficient)
            users.append(replace(u, model=new))
        return replace(self, users=tuple(users))

    def to_dict(self) -> dict:
        out = {
            "users": [u.to_dict() for u in self.users],
            "horizon": self.horizon,
            "strategy": self.strategy,
            "rate_unit": self.rate_unit,
            "solver": {"tolerance": self.solver.tolerance, "max_iter": self.solver.max_iter},
        }
        if self.r_values is not None:
            out["sweep"] = {"r_values": list(self.r_values)}
        return out


def _reject_unknown(data: dict, allowed: set, where: str):
    extra = set(data) - allowed
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(extra))}")


def parse_config(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    _reject_unknown(data, _TOP_KEYS, "configuration")
    if "users" not in data or not isinstance(data["users"], list) or not data["users"]:
        raise ConfigError("'users' must be a non-empty list")
    try:
        users = tuple(UserParams.from_dict(u) for u in data["users"])
    except MacoptError as exc:
        raise ConfigError(f"invalid user: {exc}") from exc
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid user: {exc}") from exc
    horizon = data.get("horizon", 1.0)
    if not isinstance(horizon, (int, float)) or not (horizon > 0 and math.isfinite(horizon)):
        raise ConfigError(f"'horizon' must be a positive number, got {horizon!r}")
    strategy = data.get("strategy", "all")
    if strategy not in STRATEGIES:
        raise ConfigError(f"'strategy' must be one of {STRATEGIES}, got {strategy!r}")
    unit = data.get("rate_unit", "bits")
    if unit not in UNITS:
        raise ConfigError(f"'rate_unit' must be one of {UNITS}, got {unit!r}")
    solver = data.get("solver", {})
    if not isinstance(solver, dict):
        raise ConfigError("'solver' must be an object")
    _reject_unknown(solver, _SOLVER_KEYS, "solver")
    tol = solver.get("tolerance", DEFAULT_TOL)
    max_iter = solver.get("max_iter", DEFAULT_MAX_ITER)
    if not isinstance(tol, (int, float)) or not tol > 0:
        raise ConfigError("'solver.tolerance' must be > 0")
    if not isinstance(max_iter, int) or max_iter < 1:
        raise ConfigError("'solver.max_iter' must be a positive integer")
    r_values = None
    if "sweep" in data:
        sweep = data["sweep"]
        if not isinstance(sweep, dict):
            raise ConfigError("'sweep' must be an object")
        _reject_unknown(sweep, _SWEEP_KEYS, "sweep")
        vals = sweep.get("r_values", [])
        if not isinstance(vals, list) or any(not isinstance(v, (int, float)) or v < 0 for v in vals):
            raise ConfigError("'sweep.r_values' must be a list of non-negative numbers")
        r_values = tuple(float(v) for v in vals)
    return ScenarioConfig(users, float(horizon), strategy, unit,
                          SolverSettings(float(tol), max_iter), r_values)


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return parse_config(data)


def default_config(n_users: int, resistance: float = 0.3) -> ScenarioConfig:
    """The reference scenario: ``B = 1.25``, ``gamma = 0.5``, ``T = 1``, quadratic loss."""
    model = DischargeModel.ideal() if resistance == 0 else DischargeModel.quadratic(resistance)
    return ScenarioConfig(tuple(UserParams(1.25, 0.5, model) for _ in range(n_users)))
