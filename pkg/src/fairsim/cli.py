"""Command line front end.

    fairsim run --scenario FILE --out DIR [--seed N] [--reps N] [--jobs N] [--trace]
    fairsim run --builtin NAME --out DIR ...
    fairsim figure NAME --out DIR
    fairsim check --out DIR

Errors are reported as one JSON object on stderr and a nonzero exit code.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

from .harness import (
    ScenarioError,
    _atomic_write,
    load_scenario,
    parse_scenario,
    regrade_output_dir,
    run_scenario,
)
from .core import SelectionMechanismId
from .scenarios import builtin_scenario, evsync_rewards_figure
from .selection import run_selection_experiment


class UnknownFigure(KeyError):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairsim")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write its outputs")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help="path to a scenario JSON file")
    src.add_argument("--builtin", help="name of a built-in scenario")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--reps", type=int, default=None, help="override the replication count")
    run.add_argument("--jobs", type=int, default=1, help="parallel replication workers")
    run.add_argument("--trace", action="store_true", help="record message traces")

    fig = sub.add_parser("figure", help="reproduce a named figure dataset")
    fig.add_argument("name", help="selection-highest | selection-lowest | ev-sync-rewards")
    fig.add_argument("--out", required=True)
    fig.add_argument("--seed", type=int, default=None)

    chk = sub.add_parser("check", help="re-grade the traces stored in an output directory")
    chk.add_argument("--out", required=True)
    return parser


def _cmd_run(args) -> int:
    if args.scenario:
        doc = json.load(open(args.scenario, "r", encoding="utf-8"))
    else:
        doc = builtin_scenario(args.builtin)
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.reps is not None:
        doc["replications"] = args.reps
    scenario = parse_scenario(doc)
    result = run_scenario(scenario, out_dir=args.out, jobs=args.jobs, record_trace=args.trace)
    labels = sorted({rr.report.classification.value for rr in result.replications})
    print(f"{scenario.name}: {len(result.replications)} replication(s), classification(s): {', '.join(labels)}")
    print(f"outputs written to {args.out}")
    return 0


_SELECTION_FIGURES = {
    "selection-highest": (SelectionMechanismId.HIGHEST_STAKE, 170, 50, 5000),
    "selection-lowest": (SelectionMechanismId.LOWEST_STAKE, 170, 50, 10000),
}


def _cmd_figure(args) -> int:
    if args.name in _SELECTION_FIGURES:
        mech, population, n, heights = _SELECTION_FIGURES[args.name]
        stats = run_selection_experiment(population, n, mech, heights)
        os.makedirs(args.out, exist_ok=True)
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["process_id", "count", "v_i", "alpha_i"])
        for pid in range(population):
            writer.writerow(
                [pid, stats.counts[pid], repr(stats.counts[pid] / heights), repr(1 / population)]
            )
        _atomic_write(os.path.join(args.out, "selection.csv"), buf.getvalue())
        print(f"{args.name}: selection counts over {heights} heights written to {args.out}")
        return 0
    if args.name == "ev-sync-rewards":
        doc = evsync_rewards_figure()
        if args.seed is not None:
            doc["seed"] = args.seed
        scenario = parse_scenario(doc)
        result = run_scenario(scenario, out_dir=args.out)
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["height", "mean", "mean_minus_std", "mean_plus_std"])
        for h, (mean, std_all, _) in sorted(result.aggregate.items()):
            writer.writerow([h, repr(mean), repr(mean - std_all), repr(mean + std_all)])
        _atomic_write(os.path.join(args.out, "figure.csv"), buf.getvalue())
        print(f"ev-sync-rewards: {scenario.replications} replications written to {args.out}")
        return 0
    raise UnknownFigure(args.name)


def _cmd_check(args) -> int:
    summary = regrade_output_dir(args.out)
    _atomic_write(
        os.path.join(args.out, "fairness-check.json"),
        json.dumps(summary, indent=2, sort_keys=True) + "\n",
    )
    if summary["matches_stored"]:
        print("re-graded reports match the stored fairness.json")
        return 0
    print("re-graded reports DIFFER from the stored fairness.json", file=sys.stderr)
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "figure":
            return _cmd_figure(args)
        if args.command == "check":
            return _cmd_check(args)
        return 2
    except ScenarioError as exc:
        print(json.dumps(exc.to_json()), file=sys.stderr)
        return 2
    except UnknownFigure as exc:
        known = sorted(_SELECTION_FIGURES) + ["ev-sync-rewards"]
        print(
            json.dumps({"error": {"field": "figure", "message": f"unknown figure {exc.args[0]!r}; known: {known}"}}),
            file=sys.stderr,
        )
        return 2
    except (FileNotFoundError, KeyError, ValueError) as exc:
        print(json.dumps({"error": {"field": None, "message": str(exc)}}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
