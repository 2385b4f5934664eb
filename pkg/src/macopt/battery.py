"""Non-ideal battery discharge models.

A battery drained internally at ``d`` watts delivers ``g(d)`` watts to the
transmitter.  ``g`` is concave with ``g(0) = 0`` and ``g(d) <= d``; the gap is
lost across the internal resistance.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import InvalidModel, NegativeDischarge

DEFAULT_COEFFICIENT = 4.0 / 9.0
NO_CAP = math.inf  # peak discharge of a battery whose g never turns over

_CONCAVITY_TOL = 1e-9
NEGLIGIBLE_LOSS = 1e-12  # loss coefficients below this are treated as ideal


class DischargeKind(str, enum.Enum):
    IDEAL = "ideal"
    QUADRATIC = "quadratic"
    TABULATED = "tabulated"


@dataclass(frozen=True)
class DischargeModel:
    """Discharge function ``g``.

    Quadratic models use ``g(d) = d - coefficient * resistance * d**2``.
    Tabulated models interpolate ``samples`` piecewise-linearly; the table must
    start at ``(0, 0)`` and describe a concave function with ``g(d) <= d``.
    """

    kind: DischargeKind = DischargeKind.IDEAL
    resistance: float = 0.0
    coefficient: float = DEFAULT_COEFFICIENT
    samples: tuple[tuple[float, float], ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "kind", DischargeKind(self.kind))
        if self.kind is DischargeKind.QUADRATIC:
            if not (self.resistance >= 0 and math.isfinite(self.resistance)):
                raise InvalidModel(f"resistance must be finite and >= 0, got {self.resistance}")
            if not (self.coefficient > 0 and math.isfinite(self.coefficient)):
                raise InvalidModel(f"coefficient must be finite and > 0, got {self.coefficient}")
        elif self.kind is DischargeKind.TABULATED:
            samples = tuple((float(d), float(g)) for d, g in self.samples)
            object.__setattr__(self, "samples", samples)
            _validate_table(samples)

    # -- constructors -----------------------------------------------------
    @classmethod
    def ideal(cls) -> "DischargeModel":
        return cls(DischargeKind.IDEAL)

    @classmethod
    def quadratic(cls, resistance: float, coefficient: float = DEFAULT_COEFFICIENT) -> "DischargeModel":
        return cls(DischargeKind.QUADRATIC, resistance=resistance, coefficient=coefficient)

    @classmethod
    def tabulated(cls, samples: Sequence[Sequence[float]]) -> "DischargeModel":
        return cls(DischargeKind.TABULATED, samples=tuple(tuple(s) for s in samples))

    @classmethod
    def from_dict(cls, data: dict) -> "DischargeModel":
        allowed = {"kind", "resistance", "coefficient", "samples"}
        unknown = set(data) - allowed
        if unknown:
            raise InvalidModel(f"unknown discharge model keys: {sorted(unknown)}")
        try:
            kind = DischargeKind(str(data.get("kind", "quadratic")).lower())
        except ValueError as exc:
            raise InvalidModel(f"unknown discharge model kind {data.get('kind')!r}") from exc
        if kind is DischargeKind.IDEAL:
            return cls.ideal()
        if kind is DischargeKind.QUADRATIC:
            return cls.quadratic(float(data.get("resistance", 0.0)),
                                 float(data.get("coefficient", DEFAULT_COEFFICIENT)))
        if "samples" not in data:
            raise InvalidModel("tabulated model needs 'samples'")
        return cls.tabulated(data["samples"])

    def to_dict(self) -> dict:
        if self.kind is DischargeKind.IDEAL:
            return {"kind": "ideal"}
        if self.kind is DischargeKind.QUADRATIC:
            return {"kind": "quadratic", "resistance": self.resistance,
                    "coefficient": self.coefficient}
        return {"kind": "tabulated", "samples": [list(s) for s in self.samples]}

    # -- derived ----------------------------------------------------------
    @property
    def loss_coefficient(self) -> float:
        """``a`` in ``g(d) = d - a d^2`` (zero for ideal batteries)."""
        if self.kind is DischargeKind.QUADRATIC:
            return self.coefficient * self.resistance
        return 0.0

    @property
    def is_ideal(self) -> bool:
        # below NEGLIGIBLE_LOSS the peak discharge is beyond any usable power level
        return self.kind is DischargeKind.IDEAL or (
            self.kind is DischargeKind.QUADRATIC and self.loss_coefficient < NEGLIGIBLE_LOSS)

    def kernel_params(self) -> tuple[int, float, np.ndarray, np.ndarray]:
        """``(kind_code, a, xs, ys)`` for the compiled kernels.

        kind_code 0 is the quadratic family (ideal has ``a = 0``), 1 is a table.
        """
        if self.kind is DischargeKind.TABULATED:
            xs = np.array([s[0] for s in self.samples], dtype=np.float64)
            ys = np.array([s[1] for s in self.samples], dtype=np.float64)
            return 1, 0.0, xs, ys
        return 0, 0.0 if self.is_ideal else self.loss_coefficient, np.zeros(1), np.zeros(1)


def _validate_table(samples):
    if len(samples) < 2:
        raise InvalidModel("tabulated model needs at least two samples")
    xs = np.array([s[0] for s in samples])
    ys = np.array([s[1] for s in samples])
    if not np.all(np.isfinite(xs)) or not np.all(np.isfinite(ys)):
        raise InvalidModel("tabulated samples must be finite")
    if xs[0] != 0.0 or ys[0] != 0.0:
        raise InvalidModel("tabulated model must start at (0, 0)")
    if np.any(np.diff(xs) <= 0):
        raise InvalidModel("tabulated sample abscissae must be strictly increasing")
    if np.any(ys > xs + _CONCAVITY_TOL * np.maximum(1.0, xs)):
        raise InvalidModel("tabulated model violates g(d) <= d")
    slopes = np.diff(ys) / np.diff(xs)
    if np.any(np.diff(slopes) > _CONCAVITY_TOL * np.maximum(1.0, np.abs(slopes[:-1]))):
        raise InvalidModel("tabulated model is not concave")


def _table_eval(xs, ys, d):
    """Piecewise-linear interpolant, linearly continued past the last knot."""
    if d <= xs[-1]:
        return float(np.interp(d, xs, ys))
    slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
    return float(ys[-1] + slope * (d - xs[-1]))


def discharge_with_flag(model: DischargeModel, d: float) -> tuple[float, bool]:
    """Return ``(g(d), extrapolated)``.

    ``extrapolated`` is set when ``d`` lies where the model would otherwise go
    negative (quadratic beyond ``2 D0``) or past the end of a table; the value is
    clamped at zero there.
    """
    if d < 0:
        raise NegativeDischarge(f"discharge power must be >= 0, got {d}")
    if model.is_ideal:
        return float(d), False
    if model.kind is DischargeKind.QUADRATIC:
        a = model.loss_coefficient
        if d > 1.0 / a:
            return 0.0, True
        return d - a * d * d, False
    xs = [s[0] for s in model.samples]
    ys = [s[1] for s in model.samples]
    val = _table_eval(np.asarray(xs), np.asarray(ys), d)
    past = d > xs[-1]
    return max(val, 0.0), past


def eval_discharge(model: DischargeModel, d: float) -> float:
    """Delivered power ``g(d)`` for discharge power ``d`` (watts)."""
    return discharge_with_flag(model, d)[0]


def eval_discharge_array(model: DischargeModel, d: np.ndarray) -> np.ndarray:
    """Vectorised :func:`eval_discharge` (no negativity check, clamped at 0)."""
    d = np.asarray(d, dtype=np.float64)
    if model.is_ideal:
        return d.copy()
    if model.kind is DischargeKind.QUADRATIC:
        return np.maximum(d - model.loss_coefficient * d * d, 0.0)
    xs, ys = model.kernel_params()[2:]
    out = np.interp(d, xs, ys)
    slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
    tail = d > xs[-1]
    out[tail] = ys[-1] + slope * (d[tail] - xs[-1])
    return np.maximum(out, 0.0)


def eval_derivative(model: DischargeModel, d: float) -> float:
    """Slope ``g'(d)``."""
    if d < 0:
        raise NegativeDischarge(f"discharge power must be >= 0, got {d}")
    if model.is_ideal:
        return 1.0
    if model.kind is DischargeKind.QUADRATIC:
        return 1.0 - 2.0 * model.loss_coefficient * d
    xs, ys = model.kernel_params()[2:]
    h = 1e-7 * max(1.0, d)
    lo = max(d - h, 0.0)
    hi = d + h
    return (_table_eval(xs, ys, hi) - _table_eval(xs, ys, lo)) / (hi - lo)


def peak_discharge(model: DischargeModel) -> float:
    """``D0 = argmax_d g(d)``; :data:`NO_CAP` (+inf) when ``g`` never peaks."""
    if model.is_ideal:
        return NO_CAP
    if model.kind is DischargeKind.QUADRATIC:
        return 1.0 / (2.0 * model.loss_coefficient)
    from .convex import maximize_concave_1d

    xs, ys = model.kernel_params()[2:]
    k = int(np.argmax(ys))
    if k == len(xs) - 1 and ys[-1] - ys[-2] > 0:
        # still rising at the last sample: the table defines no peak
        return NO_CAP
    lo = xs[max(k - 1, 0)]
    hi = xs[min(k + 1, len(xs) - 1)]
    x, _, _ = maximize_concave_1d(lambda t: _table_eval(xs, ys, t), lo, hi, 1e-12)
    # snap to the knot when the refinement lands within tolerance of it
    return float(xs[k]) if abs(x - xs[k]) <= 1e-9 * max(1.0, xs[k]) else float(x)


def peak_power(model: DischargeModel) -> float:
    """Largest deliverable power ``g(D0)``."""
    d0 = peak_discharge(model)
    if math.isinf(d0):
        return math.inf
    return eval_discharge(model, d0)


def min_discharge_for(model: DischargeModel, power: float) -> float | None:
    """Smallest ``d`` with ``g(d) >= power``, or ``None`` if ``g(D0) < power``."""
    if power <= 0:
        return 0.0
    if model.is_ideal:
        return float(power)
    if model.kind is DischargeKind.QUADRATIC:
        a = model.loss_coefficient
        disc = 1.0 - 4.0 * a * power
        if disc < 0:
            return None
        # stable form of (1 - sqrt(disc)) / (2a)
        return 2.0 * power / (1.0 + math.sqrt(disc))
    xs, ys = model.kernel_params()[2:]
    d0 = peak_discharge(model)
    top = peak_power(model) if math.isfinite(d0) else math.inf
    if top < power:
        return None
    for k in range(1, len(xs)):
        if ys[k] >= power:
            x0, x1, y0, y1 = xs[k - 1], xs[k], ys[k - 1], ys[k]
            return float(x0 + (power - y0) * (x1 - x0) / (y1 - y0))
    slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
    return float(xs[-1] + (power - ys[-1]) / slope)


@dataclass(frozen=True)
class UserParams:
    """One transmitter: battery energy ``B`` (J), circuit cost ``gamma`` (W)."""

    battery_energy: float
    circuit_cost: float
    model: DischargeModel = field(default_factory=DischargeModel.ideal)

    def __post_init__(self):
        if not (self.battery_energy > 0 and math.isfinite(self.battery_energy)):
            raise InvalidModel(f"battery_energy must be finite and > 0, got {self.battery_energy}")
        if not (self.circuit_cost >= 0 and math.isfinite(self.circuit_cost)):
            raise InvalidModel(f"circuit_cost must be finite and >= 0, got {self.circuit_cost}")

    @property
    def peak_discharge(self) -> float:
        return peak_discharge(self.model)

    @property
    def min_active_discharge(self) -> float | None:
        """Discharge needed just to run the circuit; ``None`` if unreachable."""
        return min_discharge_for(self.model, self.circuit_cost)

    def can_transmit(self) -> bool:
        """True when the battery can deliver strictly more than the circuit cost."""
        return peak_power(self.model) > self.circuit_cost * (1.0 + 1e-12)

    @classmethod
    def from_dict(cls, data: dict) -> "UserParams":
        allowed = {"battery_energy", "circuit_cost", "model"}
        unknown = set(data) - allowed
        if unknown:
            raise InvalidModel(f"unknown user keys: {sorted(unknown)}")
        try:
            return cls(float(data["battery_energy"]), float(data["circuit_cost"]),
                       DischargeModel.from_dict(data.get("model", {"kind": "ideal"})))
        except KeyError as exc:
            raise InvalidModel(f"user is missing key {exc}") from exc

    def to_dict(self) -> dict:
        return {"battery_energy": self.battery_energy, "circuit_cost": self.circuit_cost,
                "model": self.model.to_dict()}
