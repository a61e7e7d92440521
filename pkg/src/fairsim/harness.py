"""Scenario ingestion, replication running, aggregation, and file outputs.

Scenarios are JSON documents with an explicit schema version. A run
executes R independent replications (seed XOR replication index), grades
each one against the ground truth, and writes rewards.csv, selection.csv,
fairness.json, aggregate.csv, scenario-echo.json and one chain-<rep>.jsonl
per replication into the output directory.
"""
from __future__ import annotations

import copy
import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence

from .consensus import EngineConfig, RunResult, SimulationEngine
from .core import (
    BehaviorKind,
    Blockchain,
    GenesisConfig,
    ProcessSpec,
    RewardMechanismId,
    SelectionMechanismId,
    TimeoutPolicy,
    chain_from_jsonl,
    chain_to_jsonl,
)
from .fairness import FairnessReport, GroundTruth, build_report
from .network import Asynchronous, EventuallySynchronous, GoodBad, Synchronous
from .reward import RewardMatrix
from .selection import SelectionTally, check_selection_fairness

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Validation failure with the offending field path."""

    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message

    def to_json(self) -> dict:
        return {"error": {"field": self.path, "message": self.message}}


@dataclass
class AnalyzerOptions:
    stabilization_window: Optional[int] = None  # defaults to max_height // 2
    selection_window: int = 20
    selection_slack: Optional[int] = None


@dataclass
class Scenario:
    name: str
    specs: List[ProcessSpec]
    genesis: GenesisConfig
    model: object
    max_height: int
    seed: int
    replications: int
    engine: EngineConfig
    analyzer: AnalyzerOptions
    raw: dict = field(default_factory=dict)

    @property
    def window(self) -> int:
        if self.analyzer.stabilization_window is not None:
            return self.analyzer.stabilization_window
        return max(1, self.max_height // 2)


# -- scenario parsing --------------------------------------------------------

def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise ScenarioError(f"{path}.{key}", "missing required field")
    return obj[key]


def _heights_matching(spec, max_height: int, path: str) -> List[int]:
    if spec == "all":
        return list(range(1, max_height + 2))
    if spec == "even":
        return list(range(2, max_height + 2, 2))
    if spec == "odd":
        return list(range(1, max_height + 2, 2))
    if isinstance(spec, list):
        return [int(h) for h in spec]
    if isinstance(spec, dict):
        if "mod" in spec:
            m, r = int(spec["mod"]), int(spec.get("rem", 0))
            return [h for h in range(1, max_height + 2) if h % m == r]
        if "from" in spec:
            return list(range(int(spec["from"]), int(spec.get("to", max_height + 1)) + 1))
    raise ScenarioError(path, f"unrecognized heights specifier: {spec!r}")


_BEHAVIOR_NAMES = {k.value: k for k in BehaviorKind}


def parse_scenario(doc: dict) -> Scenario:
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ScenarioError("schema_version", f"expected {SCHEMA_VERSION}")
    name = doc.get("name", "scenario")
    max_height = _require(doc, "max_height", "")
    if not isinstance(max_height, int) or max_height < 1:
        raise ScenarioError("max_height", "must be a positive integer")

    pop = _require(doc, "population", "")
    size = _require(pop, "size", "population")
    if not isinstance(size, int) or size < 1:
        raise ScenarioError("population.size", "must be a positive integer")

    merits_doc = pop.get("merits")
    if merits_doc is None:
        merits = {pid: Fraction(1, size) for pid in range(size)}
    else:
        if len(merits_doc) != size:
            raise ScenarioError("population.merits", f"expected {size} entries")
        merits = {pid: Fraction(m).limit_denominator(10**9) for pid, m in enumerate(merits_doc)}
        if sum(merits.values()) != 1:
            raise ScenarioError("population.merits", "merits must sum to 1")

    stakes_doc = pop.get("stakes", 100)
    if isinstance(stakes_doc, int):
        stakes = {pid: stakes_doc for pid in range(size)}
    else:
        stakes = {int(k): int(v) for k, v in stakes_doc.items()}

    behaviors: Dict[int, Dict[int, BehaviorKind]] = {pid: {} for pid in range(size)}
    for i, b in enumerate(pop.get("behaviors", [])):
        path = f"population.behaviors[{i}]"
        pid = _require(b, "process", path)
        if not 0 <= pid < size:
            raise ScenarioError(f"{path}.process", f"process id {pid} out of range")
        kind_name = _require(b, "kind", path)
        if kind_name not in _BEHAVIOR_NAMES:
            raise ScenarioError(f"{path}.kind", f"unknown behavior {kind_name!r}")
        kind = _BEHAVIOR_NAMES[kind_name]
        for h in _heights_matching(_require(b, "heights", path), max_height, f"{path}.heights"):
            behaviors[pid][h] = kind

    gen = _require(doc, "genesis", "")
    n = _require(gen, "committee_size", "genesis")
    if not isinstance(n, int) or not 1 <= n <= size:
        raise ScenarioError("genesis.committee_size", f"must be in [1, {size}]")
    try:
        selection = SelectionMechanismId(_require(gen, "selection", "genesis"))
    except ValueError as exc:
        raise ScenarioError("genesis.selection", str(exc)) from None
    try:
        reward = RewardMechanismId(_require(gen, "reward", "genesis"))
    except ValueError as exc:
        raise ScenarioError("genesis.reward", str(exc)) from None
    policy = TimeoutPolicy(gen.get("timeout_policy", "fixed"))
    if selection is SelectionMechanismId.SELECT_ALL and n != size:
        raise ScenarioError("genesis.selection", "select_all requires committee_size == population.size")

    genesis = GenesisConfig(
        n=n,
        population=size,
        selection=selection,
        reward=reward,
        timeout_policy=policy,
        initial_stakes=stakes,
        reward_per_member=gen.get("reward_per_member", 1),
    )

    model = _parse_network(_require(doc, "network", ""))

    eng = doc.get("engine", {})
    engine = EngineConfig(
        delta0=eng.get("delta0", 5),
        delta_increment=eng.get("delta_increment", 5),
        round_ticks=eng.get("round_ticks", 100),
        allow_quorum_violation=eng.get("allow_quorum_violation", False),
    )

    ana = doc.get("analyzer", {})
    analyzer = AnalyzerOptions(
        stabilization_window=ana.get("stabilization_window"),
        selection_window=ana.get("selection_window", 20),
        selection_slack=ana.get("selection_slack"),
    )

    specs = [
        ProcessSpec(id=pid, merit=merits[pid], initial_stake=stakes.get(pid, 0), behavior=behaviors[pid])
        for pid in range(size)
    ]

    # committees cannot out-tolerate the Byzantine bound unless overridden
    if not engine.allow_quorum_violation:
        limit = (n - 1) // 3
        for h in range(1, max_height + 2):
            byz = sum(1 for s in specs if s.behavior_at(h) is not BehaviorKind.CORRECT)
            if byz > limit and size == n:
                raise ScenarioError(
                    "population.behaviors",
                    f"height {h} schedules {byz} Byzantine processes; at most {limit} tolerated",
                )

    replications = doc.get("replications", 1)
    if not isinstance(replications, int) or replications < 1:
        raise ScenarioError("replications", "must be a positive integer")

    return Scenario(
        name=name,
        specs=specs,
        genesis=genesis,
        model=model,
        max_height=max_height,
        seed=doc.get("seed", 0),
        replications=replications,
        engine=engine,
        analyzer=analyzer,
        raw=doc,
    )


def _parse_network(net: dict):
    kind = _require(net, "model", "network")
    if kind == "synchronous":
        return Synchronous(delay=net.get("delay", 0))
    if kind == "good_bad":
        return GoodBad(
            good_len=_require(net, "good_len", "network"),
            bad_len=_require(net, "bad_len", "network"),
            good_delay_bound=_require(net, "good_delay_bound", "network"),
            bad_delay_range=tuple(_require(net, "bad_delay_range", "network")),
            laggards={int(k): int(v) for k, v in net.get("laggards", {}).items()},
        )
    if kind == "eventually_synchronous":
        gst = net.get("gst")
        gst_height = net.get("gst_height")
        if gst is None and gst_height is None:
            raise ScenarioError("network", "eventually_synchronous needs gst or gst_height")
        return EventuallySynchronous(
            post_gst_bound=_require(net, "post_gst_bound", "network"),
            pre_gst_delay_range=tuple(_require(net, "pre_gst_delay_range", "network")),
            gst=gst,
            gst_height=gst_height,
        )
    if kind == "asynchronous":
        return Asynchronous(
            base_delay_range=tuple(net.get("base_delay_range", [0, 3])),
            burst_every_heights=net.get("burst_every_heights", 8),
            burst_initial=net.get("burst_initial", 50),
            burst_growth=net.get("burst_growth", 2),
        )
    raise ScenarioError("network.model", f"unknown model {kind!r}")


def load_scenario(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(json.load(fh))


# -- running -----------------------------------------------------------------

@dataclass
class ReplicationResult:
    index: int
    result: RunResult
    report: FairnessReport


@dataclass
class ScenarioResult:
    scenario: Scenario
    replications: List[ReplicationResult]
    # height -> (mean, std over processes x replications, std over replication means)
    aggregate: Dict[int, tuple]


def static_fairness_flags(mech: RewardMechanismId) -> tuple:
    """(complete-by-construction, accurate-by-construction)."""
    return (
        mech is RewardMechanismId.REWARD_ALL_COMMITTEE,
        mech is RewardMechanismId.NEVER_REWARD,
    )


def run_replication(scenario: Scenario, rep: int, record_trace: bool = False) -> ReplicationResult:
    config = copy.copy(scenario.engine)
    config.record_trace = record_trace
    engine = SimulationEngine(
        specs=scenario.specs,
        genesis=scenario.genesis,
        model=copy.deepcopy(scenario.model),
        max_height=scenario.max_height,
        seed=scenario.seed ^ rep,
        config=config,
    )
    result = engine.run()
    truth = GroundTruth.from_specs(scenario.specs)
    static_complete, static_accurate = static_fairness_flags(scenario.genesis.reward)
    report = build_report(
        matrix=result.matrix,
        committees=result.committees,
        truth=truth,
        population=scenario.genesis.population,
        stabilization_window=scenario.window,
        static_complete=static_complete,
        static_accurate=static_accurate,
    )
    return ReplicationResult(index=rep, result=result, report=report)


def _run_rep_task(args) -> ReplicationResult:
    doc, rep, record_trace = args
    return run_replication(parse_scenario(doc), rep, record_trace)


def run_scenario(
    scenario: Scenario,
    out_dir: Optional[str] = None,
    jobs: int = 1,
    record_trace: bool = False,
) -> ScenarioResult:
    reps: List[ReplicationResult]
    if jobs > 1 and scenario.replications > 1:
        tasks = [(scenario.raw, rep, record_trace) for rep in range(scenario.replications)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reps = list(pool.map(_run_rep_task, tasks))
        reps.sort(key=lambda r: r.index)
    else:
        reps = [run_replication(scenario, rep, record_trace) for rep in range(scenario.replications)]

    aggregate = compute_aggregate(scenario, reps)
    out = ScenarioResult(scenario=scenario, replications=reps, aggregate=aggregate)
    if out_dir is not None:
        write_outputs(out, out_dir)
    return out


def compute_aggregate(scenario: Scenario, reps: Sequence[ReplicationResult]) -> Dict[int, tuple]:
    """Per-height mean/std of the reward parameter over committee members.

    Two spreads are reported: over every (process, replication) sample and
    over per-replication means.
    """
    heights = sorted(reps[0].result.matrix.heights()) if reps else []
    out: Dict[int, tuple] = {}
    for h in heights:
        samples: List[int] = []
        rep_means: List[float] = []
        for rr in reps:
            committee = rr.result.committees[h]
            values = [rr.result.matrix.r(h, pid) for pid in committee]
            samples.extend(values)
            rep_means.append(sum(values) / len(values))
        mean = sum(samples) / len(samples)
        std_all = math.sqrt(sum((v - mean) ** 2 for v in samples) / len(samples))
        mu_rep = sum(rep_means) / len(rep_means)
        std_rep = math.sqrt(sum((v - mu_rep) ** 2 for v in rep_means) / len(rep_means))
        out[h] = (mean, std_all, std_rep)
    return out


# -- outputs -----------------------------------------------------------------

def _atomic_write(path: str, data: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(data)
    os.replace(tmp, path)


def write_outputs(result: ScenarioResult, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    scenario = result.scenario

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["replication", "height", "process_id", "r", "amount"])
    for rr in result.replications:
        for h in rr.result.matrix.heights():
            for pid in rr.result.committees[h]:
                writer.writerow([rr.index, h, pid, rr.result.matrix.r(h, pid), rr.result.matrix.amount(h, pid)])
    _atomic_write(os.path.join(out_dir, "rewards.csv"), buf.getvalue())

    tally = SelectionTally(scenario.genesis.population)
    first = result.replications[0]
    for h in sorted(first.result.committees):
        if h <= scenario.max_height:
            tally.record(h, first.result.committees[h])
    stats = tally.stats()
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["process_id", "count", "v_i", "alpha_i"])
    for pid in range(scenario.genesis.population):
        count = stats.counts[pid]
        writer.writerow(
            [pid, count, repr(count / stats.total_heights), repr(float(scenario.specs[pid].merit))]
        )
    _atomic_write(os.path.join(out_dir, "selection.csv"), buf.getvalue())

    fairness = {
        "stabilization_window": scenario.window,
        "replications": [
            {"replication": rr.index, **rr.report.to_json()} for rr in result.replications
        ],
    }
    _atomic_write(os.path.join(out_dir, "fairness.json"), json.dumps(fairness, indent=2, sort_keys=True) + "\n")

    buf = io.StringIO()
    buf.write("# mean/std of the reward parameter per height;"
              " std_all over process x replication samples, std_rep over replication means\n")
    writer = csv.writer(buf)
    writer.writerow(["height", "mean", "std_all", "std_rep"])
    for h, (mean, std_all, std_rep) in sorted(result.aggregate.items()):
        writer.writerow([h, repr(mean), repr(std_all), repr(std_rep)])
    _atomic_write(os.path.join(out_dir, "aggregate.csv"), buf.getvalue())

    _atomic_write(
        os.path.join(out_dir, "scenario-echo.json"),
        json.dumps(scenario.raw, indent=2, sort_keys=True) + "\n",
    )

    for rr in result.replications:
        _atomic_write(
            os.path.join(out_dir, f"chain-{rr.index:03d}.jsonl"),
            chain_to_jsonl(rr.result.chain),
        )
        if rr.result.trace:
            trace_lines = "\n".join(json.dumps(ev, sort_keys=True) for ev in rr.result.trace)
            _atomic_write(os.path.join(out_dir, f"trace-{rr.index:03d}.jsonl"), trace_lines + "\n")


# -- re-grading stored traces ------------------------------------------------

def regrade_output_dir(out_dir: str) -> dict:
    """Rebuild the fairness reports from chain traces on disk and compare
    them to the stored fairness.json. Returns a summary dict."""
    with open(os.path.join(out_dir, "scenario-echo.json"), "r", encoding="utf-8") as fh:
        scenario = parse_scenario(json.load(fh))
    with open(os.path.join(out_dir, "fairness.json"), "r", encoding="utf-8") as fh:
        stored = json.load(fh)

    truth = GroundTruth.from_specs(scenario.specs)
    static_complete, static_accurate = static_fairness_flags(scenario.genesis.reward)
    regraded = []
    for rep in range(scenario.replications):
        path = os.path.join(out_dir, f"chain-{rep:03d}.jsonl")
        with open(path, "r", encoding="utf-8") as fh:
            chain = chain_from_jsonl(fh.read())
        matrix, committees = matrix_from_chain(chain)
        report = build_report(
            matrix=matrix,
            committees=committees,
            truth=truth,
            population=scenario.genesis.population,
            stabilization_window=scenario.window,
            static_complete=static_complete,
            static_accurate=static_accurate,
        )
        regraded.append({"replication": rep, **report.to_json()})

    matches = regraded == stored["replications"]
    return {"matches_stored": matches, "replications": regraded}


def matrix_from_chain(chain: Blockchain):
    """Reward matrix and committee map implied by a serialized chain."""
    matrix = RewardMatrix()
    committees = {b.height: list(b.committee) for b in chain.blocks}
    for block in chain.blocks:
        if block.height >= 2:
            matrix.set_row(block.height - 1, committees[block.height - 1], block.reward_vector)
    return matrix, committees
