import json
import subprocess
import sys

import numpy as np
import pytest

from catalytic.cli import main

COLLAPSE_QWP = """qwp 1
system spin:2
system A:2
basis z on spin = [up: 1, 0; down: 0, 1]
basis x on spin = [right: 1/sqrt2, 1/sqrt2; left: 1/sqrt2, -1/sqrt2]
basis rec on A = [U: 1, 0; D: 0, 1]
prepare spin right
collapse spin in z
measure spin in z record A
report spin A in z rec
"""


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def collapse_file(tmp_path):
    f = tmp_path / "coin.qwp"
    f.write_text(COLLAPSE_QWP)
    return str(f)


def test_scenario_cat_json_matches_golden(capsys):
    code, out, _ = run_cli(capsys, "scenario", "cat", "--output", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["schema"] == 1 and doc["layout"] == [["spin", 2], ["A", 2], ["B", 2]]
    amps = np.array(doc["trace"][-1]["amplitudes"])
    want = np.array([1, 1, 1, -1, 1, -1, 1, 1]) / np.sqrt(8)
    assert np.allclose(amps[:, 0], want, atol=1e-12) and np.allclose(amps[:, 1], 0, atol=1e-12)


def test_predict_dog_naive_vs_q_star(capsys):
    code, out, _ = run_cli(capsys, "predict", "dog.qwp", "--agent", "A", "--naive", "--output", "json")
    assert code == 0
    naive = json.loads(out)["predictions"][0]
    assert naive["rule"] == "Q" and naive["certain_outcome"] == "up"
    assert naive["validation"]["status"] == "CONTRADICTION" and naive["validation"]["tv_distance"] == 0.5
    code, out, _ = run_cli(capsys, "predict", "dog.qwp", "--agent", "A", "--output", "json")
    star = json.loads(out)["predictions"][0]
    assert star["rule"] == "Q*" and star["validation"]["status"] == "ABSTAINED"
    assert star["invalid_reason"] == "catalytic measurement on agent in interval"
    code, out, _ = run_cli(capsys, "predict", "dog.qwp", "--agent", "A")
    assert "ABSTAINED" in out and "catalytic measurement on agent in interval" in out


def test_missing_file_exits_2(capsys):
    code, out, err = run_cli(capsys, "run", "missing-file.qwp")
    assert code == 2 and out == "" and "missing-file.qwp" in err


def test_usage_errors_exit_2(capsys):
    assert run_cli(capsys, "scenario", "cow")[0] == 2
    assert run_cli(capsys)[0] == 2
    assert run_cli(capsys, "run", "x.qwp", "--output", "yaml")[0] == 2


def test_collapse_needs_seed(capsys, collapse_file):
    code, _, err = run_cli(capsys, "run", collapse_file)
    assert code == 2 and "--seed" in err


def test_parse_errors_exit_1_with_locations(capsys, tmp_path):
    f = tmp_path / "bad.qwp"
    f.write_text("qwp 1\nsystem s:2\ncollapse q in z\ncollapse s in nope\n")
    code, out, err = run_cli(capsys, "run", str(f))
    lines = err.strip().splitlines()
    assert code == 1 and out == "" and len(lines) == 2
    assert lines[0] == f"{f}:3:10: semantic error: undeclared subsystem 'q'"
    assert lines[1].startswith(f"{f}:4:15: semantic error:")


def test_unknown_agent_exits_1(capsys):
    assert run_cli(capsys, "predict", "dog.qwp", "--agent", "Z")[0] == 1


def test_seeded_json_is_byte_identical_across_processes(collapse_file):
    cmd = [sys.executable, "-m", "catalytic", "run", collapse_file, "--seed", "42", "--output", "json"]
    a = subprocess.run(cmd, capture_output=True, check=True).stdout
    b = subprocess.run(cmd, capture_output=True, check=True).stdout
    assert a == b and a


def test_different_seeds_can_differ(capsys, collapse_file):
    outcomes = set()
    for seed in range(12):
        _, out, _ = run_cli(capsys, "run", collapse_file, "--seed", str(seed), "--output", "json")
        probs = json.loads(out)["trace"][-1]["reports"][0]["probabilities"]
        outcomes.add(next(tuple(p["outcome"]) for p in probs if p["probability"] == 1))
    assert outcomes == {("up", "U"), ("down", "D")}


@pytest.mark.parametrize("name", ["cat", "dog", "pet"])
def test_table_and_json_agree(capsys, name):
    prec = 6
    _, js, _ = run_cli(capsys, "scenario", name, "--output", "json", "--precision", str(prec))
    _, tab, _ = run_cli(capsys, "scenario", name, "--precision", str(prec))
    from_json = []
    for entry in json.loads(js)["trace"]:
        for rep in entry["reports"]:
            from_json += [f"{p['probability']:.{prec}f}" for p in rep["probabilities"]]
    from_table = [ln.split()[-1] for ln in tab.splitlines() if ln.startswith("      ")]
    assert from_json == from_table and from_json


def test_global_phase_is_normalized(capsys, tmp_path):
    f = tmp_path / "phase.qwp"
    f.write_text("qwp 1\nsystem s:2\nprepare s [(0,-1), 0]\n")
    _, out, _ = run_cli(capsys, "run", str(f), "--output", "json")
    assert json.loads(out)["trace"][-1]["amplitudes"] == [[1.0, 0.0], [0.0, 0.0]]


def test_feasibility_commands(capsys):
    code, out, _ = run_cli(capsys, "feasibility", "parity", "--orders", "2,60", "--output", "json")
    doc = json.loads(out)["feasibility"]
    assert code == 0 and doc["diagonal"] == [(-1.0) ** k for k in range(16)]
    assert doc["taylor"][0]["unitarity_defect"] > 0.1
    code, out, _ = run_cli(capsys, "feasibility", "needle", "--n", "3", "--output", "json")
    assert json.loads(out)["feasibility"]["needle_sites"] == {"3": 0.5, "-3": 0.5}
    code, out, _ = run_cli(capsys, "feasibility", "needle", "--agent-state", "cat-", "--output", "json")
    assert json.loads(out)["feasibility"]["needle_sites"] == {"-3": 1.0}
    code, out, _ = run_cli(capsys, "feasibility", "dephasing", "--n", "2", "--trials", "2000", "--seed", "3")
    assert code == 0 and "coherence_exact: 0.81" in out
    assert run_cli(capsys, "feasibility", "needle", "--L", "50")[0] == 1
