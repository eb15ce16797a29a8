"""The universal output record of every check in the package."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field


def _clean(v):
    if isinstance(v, float):
        if math.isnan(v) or math.isinf(v):
            return repr(v)
        return v
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if hasattr(v, "item"):  # numpy scalar
        return _clean(v.item())
    return v


@dataclass(frozen=True)
class EstimateReport:
    """A measured quantity compared against a bound.

    ``sense='upper'``: passes iff measured <= bound*(1+1e-9).
    ``sense='lower'``: passes iff measured >= bound*(1-1e-9) (used for the
    optimality lower bounds, where the bound is a floor).
    """

    name: str
    measured: float
    bound: float
    constant_used: float = float("nan")
    context: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    sense: str = "upper"

    @property
    def passed(self) -> bool:
        m, b = self.measured, self.bound
        if m is None or b is None or math.isnan(m) or math.isnan(b):
            return False
        if self.sense == "lower":
            return m >= b * (1 - 1e-9) if b >= 0 else m >= b * (1 + 1e-9)
        return m <= b * (1 + 1e-9) if b >= 0 else m <= b * (1 - 1e-9)

    @property
    def margin(self) -> float:
        """Relative slack; positive when passing."""
        scale = abs(self.bound) if self.bound else 1.0
        d = self.bound - self.measured if self.sense == "upper" else self.measured - self.bound
        return d / scale

    def to_dict(self) -> dict:
        return _clean({
            "name": self.name, "passed": self.passed, "measured": float(self.measured),
            "bound": float(self.bound), "sense": self.sense,
            "constant_used": float(self.constant_used), "margin": self.margin,
            "context": self.context, "details": self.details,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def all_passed(reports) -> bool:
    return all(r.passed for r in reports)
