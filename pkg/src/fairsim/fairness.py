"""Ground-truth analyzer: grades every height against the three reward
conditions and classifies the whole run.

The ground truth comes from the behavior schedule, not from what any
process observed: a member counts as having followed the protocol for a
height iff it was scheduled correct there.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from .core import BehaviorKind, ProcessId, ProcessSpec
from .reward import RewardMatrix, RewardsNotYetAllocated


class AnalyzerError(ValueError):
    pass


class InsufficientTrace(AnalyzerError):
    pass


@dataclass
class GroundTruth:
    """Which processes actually followed the protocol at each height."""

    behaviors: Dict[ProcessId, Dict[int, BehaviorKind]]

    @classmethod
    def from_specs(cls, specs: Sequence[ProcessSpec]) -> "GroundTruth":
        return cls(behaviors={s.id: dict(s.behavior) for s in specs})

    def followed_protocol(self, height: int, pid: ProcessId) -> bool:
        kind = self.behaviors.get(pid, {}).get(height, BehaviorKind.CORRECT)
        return kind is BehaviorKind.CORRECT


#: (non-member rewards are zero, completeness, accuracy)
HeightGrade = Tuple[bool, bool, bool]


def grade_height(
    height: int,
    matrix: RewardMatrix,
    committee: Sequence[ProcessId],
    truth: GroundTruth,
    population: int,
) -> HeightGrade:
    """Grade one height's allocation against the three conditions."""
    if not matrix.has(height):
        raise RewardsNotYetAllocated(height)
    members = set(committee)
    cond1 = all(
        matrix.r(height, pid) == 0 for pid in range(population) if pid not in members
    )
    completeness = all(
        matrix.r(height, pid) == 1
        for pid in members
        if truth.followed_protocol(height, pid)
    )
    accuracy = all(
        matrix.r(height, pid) == 0
        for pid in members
        if not truth.followed_protocol(height, pid)
    )
    return cond1, completeness, accuracy


class Classification(Enum):
    FAIR = "fair"
    EVENTUALLY_FAIR = "eventually_fair"
    COMPLETE_FAIR = "complete_fair"
    ACCURATE_FAIR = "accurate_fair"
    NONE = "none"


@dataclass
class FairnessReport:
    grades: Dict[int, HeightGrade]
    classification: Classification
    # first height of the clean suffix when (eventually) fair; 1 for fair runs
    h0: Optional[int]
    # observational facts, independent of the headline label
    complete_rows_ok: bool
    accurate_rows_ok: bool
    witnesses: List[Tuple[int, ProcessId, str]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "classification": self.classification.value,
            "h0": self.h0,
            "complete_rows_ok": self.complete_rows_ok,
            "accurate_rows_ok": self.accurate_rows_ok,
            "grades": {
                str(h): {"cond1": g[0], "completeness": g[1], "accuracy": g[2]}
                for h, g in sorted(self.grades.items())
            },
            "witnesses": [
                {"height": h, "process": p, "condition": c} for h, p, c in self.witnesses
            ],
        }


def classify(
    grades: Dict[int, HeightGrade],
    stabilization_window: int,
    static_complete: bool = False,
    static_accurate: bool = False,
) -> Tuple[Classification, Optional[int]]:
    """Classify a finite trace of per-height grades.

    Eventual fairness on a finite trace is declared only when the maximal
    clean suffix spans at least ``stabilization_window`` heights. The
    complete-fair / accurate-fair labels are reserved for mechanisms whose
    construction guarantees the respective condition (``static_*`` flags):
    an observed run of some timing-dependent mechanism can satisfy accuracy
    vacuously without the mechanism being accurate by design.
    """
    if not grades:
        raise InsufficientTrace("no graded heights")
    heights = sorted(grades)
    horizon = len(heights)
    if horizon < stabilization_window:
        raise InsufficientTrace(
            f"{horizon} graded heights < stabilization window {stabilization_window}"
        )

    def clean(h: int) -> bool:
        return all(grades[h])

    if all(clean(h) for h in heights):
        return Classification.FAIR, heights[0]

    # maximal clean suffix
    h0 = None
    for h in reversed(heights):
        if clean(h):
            h0 = h
        else:
            break
    if h0 is not None and heights[-1] - h0 + 1 >= stabilization_window:
        return Classification.EVENTUALLY_FAIR, h0

    if static_complete and all(grades[h][0] and grades[h][1] for h in heights):
        return Classification.COMPLETE_FAIR, None
    if static_accurate and all(grades[h][0] and grades[h][2] for h in heights):
        return Classification.ACCURATE_FAIR, None
    return Classification.NONE, None


def build_report(
    matrix: RewardMatrix,
    committees: Dict[int, List[ProcessId]],
    truth: GroundTruth,
    population: int,
    stabilization_window: int,
    static_complete: bool = False,
    static_accurate: bool = False,
) -> FairnessReport:
    """Grade every allocated height and classify the run."""
    grades: Dict[int, HeightGrade] = {}
    witnesses: List[Tuple[int, ProcessId, str]] = []
    for h in matrix.heights():
        committee = committees[h]
        grade = grade_height(h, matrix, committee, truth, population)
        grades[h] = grade
        members = set(committee)
        if not grade[0]:
            for pid in range(population):
                if pid not in members and matrix.r(h, pid) == 1:
                    witnesses.append((h, pid, "cond1"))
        if not grade[1]:
            for pid in committee:
                if truth.followed_protocol(h, pid) and matrix.r(h, pid) == 0:
                    witnesses.append((h, pid, "completeness"))
        if not grade[2]:
            for pid in committee:
                if not truth.followed_protocol(h, pid) and matrix.r(h, pid) == 1:
                    witnesses.append((h, pid, "accuracy"))

    label, h0 = classify(grades, stabilization_window, static_complete, static_accurate)
    return FairnessReport(
        grades=grades,
        classification=label,
        h0=h0,
        complete_rows_ok=all(g[0] and g[1] for g in grades.values()),
        accurate_rows_ok=all(g[0] and g[2] for g in grades.values()),
        witnesses=witnesses,
    )
