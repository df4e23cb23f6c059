import json
import subprocess
import sys

import numpy as np
import pytest

from teamcorr.cli import CSV_HEADER, main
from teamcorr.model import chsh_team, random_team, save_team, team_to_dict


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_solve_chsh_classical(capsys):
    code, out, _ = run(capsys, "solve", "--problem", "chsh.json", "--class", "classical")
    assert code == 0
    assert "classical value: 0.5" in out
    assert "gamma^1 = [0, 0]" in out


@pytest.mark.parametrize("cls,value", [("ns", "1"), ("m", "1"), ("cj", "1")])
def test_solve_relaxations(capsys, cls, value):
    code, out, _ = run(capsys, "solve", "--problem", "chsh.json", "--class", cls)
    assert code == 0 and f"{cls} value: {value}" in out


def test_csv_on_stdout(capsys):
    code, out, err = run(capsys, "solve", "--problem", "chsh.json", "--out", "-", "--no-timing")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == CSV_HEADER
    assert lines[1] == "problem,class,value,wall_time"
    assert lines[2] == "chsh.json,classical,0.5,"
    assert "classical value" in err


def test_csv_file_is_byte_identical_without_timing(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert main(["hierarchy", "--problem", "chsh.json", "--xor", "--out", str(path), "--no-timing", "--quiet"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert capsys.readouterr().out == ""
    rows = a.read_text().splitlines()
    assert [r.split(",")[1] for r in rows[2:]] == ["classical", "quantum", "ns", "m", "cj"]


def test_hierarchy_report(capsys):
    code, out, _ = run(capsys, "hierarchy", "--problem", "chsh.json", "--xor")
    assert code == 0 and "chain holds" in out
    assert "0.707106781187" in out


def test_input_errors_exit_2(tmp_path, capsys):
    assert main(["solve", "--problem", str(tmp_path / "nope.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["solve", "--problem", str(bad)]) == 2
    data = team_to_dict(chsh_team())
    data["prior"] = [0.3] * 4
    bad.write_text(json.dumps(data))
    assert main(["solve", "--problem", str(bad)]) == 2
    assert main(["solve"]) == 2
    assert main(["witsenhausen", "--k", "0"]) == 2
    assert main(["solve", "--problem", "chsh.json", "--threads", "0"]) == 2
    capsys.readouterr()


def test_non_product_prior_is_an_input_error(tmp_path, capsys):
    data = team_to_dict(chsh_team())
    data["prior"] = [0.5, 0.0, 0.0, 0.5]
    path = tmp_path / "corr.json"
    path.write_text(json.dumps(data))
    assert main(["solve", "--problem", str(path), "--class", "ns"]) == 2
    assert main(["hierarchy", "--problem", str(path)]) == 2
    assert "static_reduce" in capsys.readouterr().err


def test_profile_cap_is_a_solver_error(tmp_path, capsys):
    # 3^18 deterministic profiles, far above the enumeration cap
    data = {"num_dms": 3, "omega0_size": 1, "obs_sizes": [6, 6, 6], "act_sizes": [3, 3, 3],
            "prior": (np.ones(216) / 216).tolist(), "cost": np.zeros(216 * 27).tolist()}
    path = tmp_path / "big.json"
    path.write_text(json.dumps(data))
    assert main(["solve", "--problem", str(path)]) == 3
    capsys.readouterr()


def test_witsenhausen_command(capsys):
    code, out, _ = run(capsys, "witsenhausen", "--levels", "16", "--out", "-", "--no-timing", "--quiet")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == CSV_HEADER
    assert lines[1].startswith("k,sigma,levels,finite_value")
    assert len(lines) == 3


@pytest.mark.parametrize("which,code", [("squarewave", 0), ("pomdp", 0), ("lc", 4)])
def test_counterexample_exit_codes(capsys, which, code):
    got, out, err = run(capsys, "counterexample", "--which", which, "--n", "16", "--horizon", "200")
    assert got == code
    if which == "lc":
        assert "mixture LP is feasible" in err
    if which == "pomdp":
        assert "1.0 vs 0.5" in out


def test_quiet_suppresses_the_report(capsys):
    code, out, err = run(capsys, "solve", "--problem", "chsh.json", "--quiet")
    assert code == 0 and out == "" and err == ""


def test_entry_point_and_thread_variable(tmp_path):
    path = tmp_path / "t.json"
    save_team(random_team(np.random.default_rng(5), num_dms=3, max_size=2), path)
    outputs = []
    for threads in ("1", "4"):
        proc = subprocess.run(
            [sys.executable, "-m", "teamcorr.cli", "solve", "--problem", str(path), "--out", "-", "--no-timing",
             "--quiet"],
            capture_output=True, text=True, env={"TEAMCORR_THREADS": threads, "PATH": ""},
        )
        assert proc.returncode == 0, proc.stderr
        outputs.append(proc.stdout)
    assert outputs[0] == outputs[1]
