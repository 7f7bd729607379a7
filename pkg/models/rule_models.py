# svann-interpretation/models/rule_models.py

from enum import Enum
from typing import Dict, List

from pydantic import BaseModel, ConfigDict, Field, model_validator

# --- Enums ---

class BuiltinRuleSet(str, Enum):
    NDVI_DEFAULT = "ndvi_default"
    NDWI_DEFAULT = "ndwi_default"


WETLAND = 1
NON_WETLAND = 0


class Interval(BaseModel):
    """Half-open [lo, hi) index range carrying a land-cover label."""
    model_config = ConfigDict(frozen=True)

    lo: float
    hi: float
    label: str = Field(..., min_length=1)


def interval_problems(intervals: List[Interval]) -> List[str]:
    """Describes every defect in an interval list; empty when it tiles [-1, 1] exactly."""
    problems: List[str] = []
    if not intervals:
        return ["no intervals given"]
    for iv in intervals:
        if iv.lo >= iv.hi:
            problems.append(f"empty interval {iv.label!r} [{iv.lo}, {iv.hi})")
    if intervals[0].lo != -1.0:
        problems.append(f"first interval {intervals[0].label!r} starts at {intervals[0].lo}, not -1")
    if intervals[-1].hi != 1.0:
        problems.append(f"last interval {intervals[-1].label!r} ends at {intervals[-1].hi}, not 1")
    for prev, nxt in zip(intervals, intervals[1:]):
        pair = f"({prev.lo}, {prev.hi}) / ({nxt.lo}, {nxt.hi})"
        if nxt.lo < prev.hi:
            problems.append(f"overlap between {prev.label!r} and {nxt.label!r}: {pair}")
        elif nxt.lo > prev.hi:
            problems.append(f"gap between {prev.label!r} and {nxt.label!r}: {pair}")
    return problems


class RuleSet(BaseModel):
    """
    Rule-based classifier over a single index band. Intervals tile [-1, 1];
    the last interval is closed at 1. `binary` collapses labels to wetland (1)
    or non-wetland (0).
    """
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    index_id: str = Field(..., alias="index")
    intervals: List[Interval]
    binary_map: Dict[str, int] = Field(..., alias="binary")
    name: str = ""

    @model_validator(mode="after")
    def check_rules(self):
        problems = interval_problems(self.intervals)
        for iv in self.intervals:
            if iv.label not in self.binary_map:
                problems.append(f"label {iv.label!r} missing from binary map")
        for label, value in self.binary_map.items():
            if value not in (WETLAND, NON_WETLAND):
                problems.append(f"label {label!r} maps to {value}, expected 0 or 1")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    @property
    def boundaries(self) -> List[float]:
        return [iv.lo for iv in self.intervals] + [self.intervals[-1].hi]

    @property
    def display_name(self) -> str:
        return self.name or f"rule-{self.index_id.lower()}"
