"""Inequality-check records shared by the localization, heat and bounds modules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

EXPLICIT = "explicit"
UNIT_CONSTANT = "unit-constant"

PASS = "pass"
FAIL = "fail"
VACUOUS = "vacuous-pass"
RATIO_ONLY = "ratio-only"
PRECONDITION_FAIL = "precondition-fail"
NOT_APPLICABLE = "not-applicable"

PASSING = (PASS, VACUOUS)
FAILING = (FAIL, PRECONDITION_FAIL)


@dataclass
class BoundReport:
    """One evaluated inequality ``lhs <= rhs`` (or ``lhs >= rhs`` for lower bounds).

    ``ratio`` is always ``lhs / rhs``. A verdict of pass/fail is only ever
    issued for explicit constants; unit-constant checks are ratio-only.
    """

    check: str
    lhs: float
    rhs: float
    constant_mode: str = EXPLICIT
    verdict: str = RATIO_ONLY
    case: str = ""
    inputs: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def __post_init__(self):
        if self.constant_mode != EXPLICIT and self.verdict in (PASS, FAIL):
            raise ValueError("pass/fail verdicts need an explicit constant")

    @property
    def ratio(self):
        if self.rhs == 0:
            return math.inf if self.lhs > 0 else 0.0
        return self.lhs / self.rhs

    @property
    def passed(self):
        return self.verdict in PASSING

    @property
    def failed(self):
        return self.verdict in FAILING

    def to_dict(self):
        return {
            "check": self.check,
            "case": self.case,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "ratio": self.ratio,
            "constant_mode": self.constant_mode,
            "verdict": self.verdict,
            "inputs": dict(sorted(self.inputs.items())),
            "notes": list(self.notes),
        }


def upper(check, lhs, rhs, *, slack=1.0, **kw):
    """Explicit upper bound ``lhs <= slack * rhs``."""
    verdict = PASS if lhs <= rhs * slack else FAIL
    rep = BoundReport(check, float(lhs), float(rhs), EXPLICIT, verdict, **kw)
    if slack != 1.0:
        rep.inputs["slack"] = slack
    return rep


def lower(check, lhs, rhs, *, slack=1.0, **kw):
    """Explicit lower bound ``lhs >= rhs / slack``."""
    verdict = PASS if lhs * slack >= rhs else FAIL
    rep = BoundReport(check, float(lhs), float(rhs), EXPLICIT, verdict, **kw)
    if slack != 1.0:
        rep.inputs["slack"] = slack
    return rep


def ratio_only(check, lhs, rhs, **kw):
    return BoundReport(check, float(lhs), float(rhs), UNIT_CONSTANT, RATIO_ONLY, **kw)
