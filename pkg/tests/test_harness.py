import copy
import csv
import json
import os

import pytest

from fairsim.cli import main as cli_main
from fairsim.harness import (
    ScenarioError,
    matrix_from_chain,
    parse_scenario,
    regrade_output_dir,
    run_scenario,
)
from fairsim.scenarios import builtin_scenario, sync_suspicion_equivocator


def _doc(**overrides):
    doc = sync_suspicion_equivocator(seed=4, max_height=20)
    doc.update(overrides)
    return doc


def test_parse_roundtrip_defaults():
    sc = parse_scenario(_doc())
    assert sc.genesis.n == 4
    assert sc.window == 10  # max_height // 2
    assert sc.replications == 1
    assert sc.specs[1].behavior  # equivocation schedule materialized


def test_parse_rejects_bad_schema_version():
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(_doc(schema_version=99))
    assert exc.value.path == "schema_version"


def test_parse_rejects_missing_population_size():
    doc = _doc()
    del doc["population"]["size"]
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(doc)
    assert exc.value.path == "population.size"


def test_parse_rejects_out_of_range_behavior_process():
    doc = _doc()
    doc["population"]["behaviors"] = [{"process": 9, "kind": "silent", "heights": "all"}]
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(doc)
    assert exc.value.path == "population.behaviors[0].process"


def test_parse_rejects_unknown_behavior_kind():
    doc = _doc()
    doc["population"]["behaviors"] = [{"process": 1, "kind": "sneaky", "heights": "all"}]
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(doc)
    assert "sneaky" in exc.value.message


def test_parse_rejects_select_all_mismatch():
    doc = _doc()
    doc["genesis"]["committee_size"] = 3
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(doc)
    assert exc.value.path == "genesis.selection"


def test_parse_rejects_merits_not_summing_to_one():
    doc = _doc()
    doc["population"]["merits"] = [0.5, 0.5, 0.5, 0.5]
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(doc)
    assert exc.value.path == "population.merits"


def test_parse_rejects_too_many_byzantine():
    doc = _doc()
    doc["population"]["behaviors"] = [
        {"process": 0, "kind": "silent", "heights": [3]},
        {"process": 1, "kind": "silent", "heights": [3]},
    ]
    with pytest.raises(ScenarioError):
        parse_scenario(doc)


def test_heights_specifiers():
    doc = _doc()
    doc["population"]["behaviors"] = [
        {"process": 1, "kind": "silent", "heights": {"mod": 5, "rem": 2}}
    ]
    sc = parse_scenario(doc)
    assert sorted(sc.specs[1].behavior) == [2, 7, 12, 17]
    doc["population"]["behaviors"] = [
        {"process": 1, "kind": "silent", "heights": {"from": 4, "to": 6}}
    ]
    sc = parse_scenario(doc)
    assert sorted(sc.specs[1].behavior) == [4, 5, 6]
    doc["population"]["behaviors"] = [{"process": 1, "kind": "silent", "heights": [1, 9]}]
    sc = parse_scenario(doc)
    assert sorted(sc.specs[1].behavior) == [1, 9]


def test_run_scenario_writes_expected_files(tmp_path):
    sc = parse_scenario(_doc(replications=2))
    run_scenario(sc, out_dir=str(tmp_path))
    names = sorted(os.listdir(tmp_path))
    assert names == [
        "aggregate.csv",
        "chain-000.jsonl",
        "chain-001.jsonl",
        "fairness.json",
        "rewards.csv",
        "scenario-echo.json",
        "selection.csv",
    ]


def test_aggregate_matches_rewards_csv(tmp_path):
    sc = parse_scenario(_doc(replications=3))
    run_scenario(sc, out_dir=str(tmp_path))
    by_height = {}
    with open(tmp_path / "rewards.csv") as fh:
        for row in csv.DictReader(fh):
            by_height.setdefault(int(row["height"]), []).append(int(row["r"]))
    with open(tmp_path / "aggregate.csv") as fh:
        fh.readline()  # comment line
        for row in csv.DictReader(fh):
            h = int(row["height"])
            samples = by_height[h]
            mean = sum(samples) / len(samples)
            assert abs(float(row["mean"]) - mean) < 1e-12


def test_replication_seeds_differ(tmp_path):
    doc = _doc(replications=2)
    doc["network"] = {
        "model": "eventually_synchronous",
        "gst_height": 5,
        "post_gst_bound": 4,
        "pre_gst_delay_range": [3, 20],
    }
    doc["population"]["behaviors"] = []
    doc["genesis"]["reward"] = "tendermint_to_reward"
    sc = parse_scenario(doc)
    res = run_scenario(sc)
    a, b = res.replications
    assert a.result.matrix._rows != b.result.matrix._rows


def test_regrade_matches(tmp_path):
    sc = parse_scenario(_doc(replications=2))
    run_scenario(sc, out_dir=str(tmp_path))
    summary = regrade_output_dir(str(tmp_path))
    assert summary["matches_stored"]


def test_regrade_detects_tampering(tmp_path):
    sc = parse_scenario(_doc())
    run_scenario(sc, out_dir=str(tmp_path))
    stored = json.loads((tmp_path / "fairness.json").read_text())
    stored["replications"][0]["classification"] = "none"
    (tmp_path / "fairness.json").write_text(json.dumps(stored))
    assert not regrade_output_dir(str(tmp_path))["matches_stored"]


def test_matrix_from_chain_reconstruction(tmp_path):
    sc = parse_scenario(_doc())
    res = run_scenario(sc)
    rr = res.replications[0]
    matrix, committees = matrix_from_chain(rr.result.chain)
    assert matrix.heights() == rr.result.matrix.heights()
    for h in matrix.heights():
        assert matrix.rewarded(h) == rr.result.matrix.rewarded(h)


def test_parallel_jobs_match_serial(tmp_path):
    sc = parse_scenario(_doc(replications=3))
    serial = run_scenario(sc)
    parallel = run_scenario(sc, jobs=2)
    for a, b in zip(serial.replications, parallel.replications):
        assert a.report.to_json() == b.report.to_json()
        assert a.result.decided_at == b.result.decided_at


# -- command line -----------------------------------------------------------

def test_cli_run_builtin_and_check(tmp_path, capsys):
    out = tmp_path / "run"
    assert cli_main(["run", "--builtin", "sync-suspicion-equivocator", "--out", str(out)]) == 0
    assert cli_main(["check", "--out", str(out)]) == 0
    assert (out / "fairness-check.json").exists()


def test_cli_run_scenario_file(tmp_path, capsys):
    path = tmp_path / "sc.json"
    path.write_text(json.dumps(_doc()))
    assert cli_main(["run", "--scenario", str(path), "--out", str(tmp_path / "o")]) == 0
    echoed = json.loads((tmp_path / "o" / "scenario-echo.json").read_text())
    assert echoed["max_height"] == 20


def test_cli_seed_and_reps_overrides(tmp_path, capsys):
    out = tmp_path / "o"
    rc = cli_main(
        ["run", "--builtin", "sync-suspicion-equivocator", "--out", str(out), "--seed", "9", "--reps", "2"]
    )
    assert rc == 0
    echoed = json.loads((out / "scenario-echo.json").read_text())
    assert echoed["seed"] == 9
    assert echoed["replications"] == 2
    assert (out / "chain-001.jsonl").exists()


def test_cli_invalid_scenario_exits_nonzero(tmp_path, capsys):
    path = tmp_path / "bad.json"
    doc = _doc()
    doc["schema_version"] = 99
    path.write_text(json.dumps(doc))
    rc = cli_main(["run", "--scenario", str(path), "--out", str(tmp_path / "o")])
    assert rc == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"]["field"] == "schema_version"


def test_cli_unknown_figure(tmp_path, capsys):
    rc = cli_main(["figure", "no-such-figure", "--out", str(tmp_path)])
    assert rc == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert "no-such-figure" in err["error"]["message"]


def test_cli_unknown_builtin(tmp_path, capsys):
    rc = cli_main(["run", "--builtin", "nope", "--out", str(tmp_path)])
    assert rc == 2


def test_builtin_scenarios_all_parse():
    from fairsim.scenarios import BUILTIN

    for name in BUILTIN:
        parse_scenario(builtin_scenario(name))


def test_sync_all_correct_always_rewarded(tmp_path):
    doc = _doc(max_height=50)
    doc["population"]["behaviors"] = []
    res = run_scenario(parse_scenario(doc))
    for h, (mean, std_all, std_rep) in res.aggregate.items():
        assert mean == 1.0 and std_all == 0.0 and std_rep == 0.0, h


def test_cli_figure_selection_lowest(tmp_path, capsys):
    assert cli_main(["figure", "selection-lowest", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "selection.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 170
    assert all(abs(int(r["count"]) - 2941) <= 50 for r in rows)


def test_cli_figure_ev_sync_rewards(tmp_path, capsys):
    assert cli_main(["figure", "ev-sync-rewards", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "figure.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 30
    assert list(rows[0]) == ["height", "mean", "mean_minus_std", "mean_plus_std"]
    last = rows[-1]
    assert float(last["mean"]) == 1.0
    assert float(last["mean_minus_std"]) == 1.0
