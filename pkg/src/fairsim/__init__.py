"""Deterministic simulator for committee-based repeated consensus with
selection and reward mechanisms, plus a ground-truth fairness analyzer."""

from .core import (
    BehaviorKind,
    Block,
    Blockchain,
    GenesisConfig,
    ProcessSpec,
    RewardMechanismId,
    SelectionMechanismId,
    TimeoutPolicy,
)
from .consensus import EngineConfig, QuorumImpossible, RunResult, SimulationEngine, run_height
from .fairness import Classification, FairnessReport, GroundTruth, build_report, classify, grade_height
from .harness import Scenario, ScenarioError, load_scenario, parse_scenario, run_scenario
from .network import Asynchronous, EventuallySynchronous, GoodBad, Synchronous
from .reward import RewardMatrix, SuspicionState, allocate, suspicion_quorum
from .selection import SelectionState, check_selection_fairness, run_selection_experiment, select

__all__ = [
    "Asynchronous",
    "BehaviorKind",
    "Block",
    "Blockchain",
    "Classification",
    "EngineConfig",
    "EventuallySynchronous",
    "FairnessReport",
    "GenesisConfig",
    "GoodBad",
    "GroundTruth",
    "ProcessSpec",
    "QuorumImpossible",
    "RewardMatrix",
    "RewardMechanismId",
    "RunResult",
    "Scenario",
    "ScenarioError",
    "SelectionMechanismId",
    "SelectionState",
    "SimulationEngine",
    "SuspicionState",
    "Synchronous",
    "TimeoutPolicy",
    "allocate",
    "build_report",
    "check_selection_fairness",
    "classify",
    "grade_height",
    "load_scenario",
    "parse_scenario",
    "run_height",
    "run_scenario",
    "run_selection_experiment",
    "select",
    "suspicion_quorum",
]

__version__ = "0.1.0"
