"""Bound reports shared by every module."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

EXACT_TOL = 1e-9
VERDICTS = ("pass", "fail", "inconclusive", "formula-only")


def _clean(value):
    """Turn numpy scalars and arrays into plain Python objects."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


@dataclass
class BoundReport:
    """A named inequality evaluated on concrete inputs.

    ``sense`` is ``"<="`` when the claim is ``lhs <= rhs`` and ``">="``
    when it is ``lhs >= rhs``.  ``slack`` is signed so that a
    non-negative value means the claim holds.

    In Monte Carlo mode ``ci`` holds the interval of the slack; the
    verdict is pass only when the whole interval is non-negative.
    """

    name: str
    lhs: float
    rhs: float
    sense: str = "<="
    constants: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    units: str = "bits"
    mode: str = "exact"
    ci: tuple | None = None
    verdict: str = ""
    tol: float = EXACT_TOL

    def __post_init__(self):
        if self.sense not in ("<=", ">="):
            raise ValueError(f"bad sense {self.sense!r}")
        if not self.verdict:
            self.verdict = self._decide()
        elif self.verdict not in VERDICTS:
            raise ValueError(f"bad verdict {self.verdict!r}")

    @property
    def slack(self):
        lhs, rhs = float(self.lhs), float(self.rhs)
        if math.isinf(lhs) and math.isinf(rhs) and (lhs > 0) == (rhs > 0):
            return math.nan
        return rhs - lhs if self.sense == "<=" else lhs - rhs

    def _decide(self):
        if self.mode == "mc":
            if self.ci is None:
                return "inconclusive"
            lo, hi = self.ci
            if lo >= 0:
                return "pass"
            if hi < 0:
                return "fail"
            return "inconclusive"
        s = self.slack
        if math.isnan(s):
            return "inconclusive"
        return "pass" if s >= -self.tol else "fail"

    @property
    def passed(self):
        return self.verdict == "pass"

    def to_dict(self):
        return _clean({
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "sense": self.sense,
            "slack": self.slack,
            "verdict": self.verdict,
            "mode": self.mode,
            "ci": list(self.ci) if self.ci is not None else None,
            "units": self.units,
            "constants": self.constants,
            "details": self.details,
        })


def worst(reports):
    """Combined verdict of several reports (fail beats inconclusive beats pass)."""
    verdicts = [r.verdict for r in reports]
    if "fail" in verdicts:
        return "fail"
    if "inconclusive" in verdicts or "formula-only" in verdicts:
        return "inconclusive"
    return "pass"
