import json
import os
import subprocess
import sys

import pytest

from virasoro_ext.algebra import ModuleParams, VermaVector
from virasoro_ext.cli import EXIT_FAILED, EXIT_INVALID, EXIT_OK, main
from virasoro_ext.correlators import RationalCorrelator
from virasoro_ext.structure import projection_split


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_singular_output_roundtrips(capsys):
    code, out, _ = run(capsys, "singular", "--c", "1", "--h", "1/4", "--max-level", "6")
    assert code == EXIT_OK
    data = json.loads(out)
    assert [d["level"] for d in data] == [2, 6]
    v = VermaVector.from_json(data[0]["vector"])
    p = ModuleParams(1, "1/4")
    assert v == VermaVector(p, {(1, 1): 1, (2,): -1})


def test_gram_levels(capsys):
    code, out, _ = run(capsys, "gram", "--c", "1/2", "--h", "0", "--max-level", "3")
    assert code == EXIT_OK
    data = json.loads(out)
    assert [d["level"] for d in data] == [0, 1, 2, 3]
    assert data[1]["entries"] == [["0/1"]]


def test_classify_case_d(capsys):
    code, out, _ = run(capsys, "classify", "--c", "1/2", "--h", "1/2", "--cap", "20")
    assert code == EXIT_OK
    data = json.loads(out)
    assert data["case"] == "D"
    assert "h_i" in data and "h_prime_i" in data


def test_project_reads_vector_file(tmp_path, capsys):
    p = ModuleParams(1, "1/4")
    v = VermaVector(p, {(1, 1, 1): 1, (3,): 2})
    src = tmp_path / "v.json"
    src.write_text(json.dumps(v.to_json()))
    dest = tmp_path / "out.json"
    code, out, _ = run(capsys, "project", str(src), "--out", str(dest))
    assert code == EXIT_OK and out == ""
    data = json.loads(dest.read_text())
    assert VermaVector.from_json(data["projected"]) == projection_split(p).project(v)


def test_correlator_output(capsys):
    code, out, _ = run(capsys, "correlator", "--insertions", "2,2", "--pi", "none", "--source", "",
                       "--dual", "2,2", "--degree", "4")
    assert code == EXIT_OK
    data = json.loads(out)
    r = RationalCorrelator.from_json(data["correlator"])
    assert not r.is_zero()
    assert data["expansion"]


def test_ext_scenarios(capsys):
    code, out, _ = run(capsys, "ext", "nonsplit", "--cap", "5")
    assert code == EXIT_OK
    data = json.loads(out)
    assert data["inner"] is False and data["cocycle"] is True and data["roundtrip"]["passed"]
    code, out, _ = run(capsys, "ext", "split", "--cap", "5")
    assert code == EXIT_OK and json.loads(out)["witness_is_zero"] is True
    code, out, _ = run(capsys, "ext", "sections", "--cap", "5")
    assert code == EXIT_OK and json.loads(out)["equivalent"] is True


@pytest.mark.parametrize("argv", [
    ["singular", "--c", "1/x"],
    ["singular", "--max-level", "0"],
    ["classify", "--h", "0.5"],
    ["project", "/nonexistent/vector.json"],
    ["correlator", "--insertions", "1"],
    ["correlator", "--source", "1,2"],
    ["verify", "--suite", "nonsense"],
    ["verify", "--suite", "99"],
    ["nosuchcommand"],
    ["ext", "sideways"],
])
def test_invalid_input_exit_code(argv, capsys):
    code, _, err = run(capsys, *argv)
    assert code == EXIT_INVALID
    assert err


def test_block_d_projection_rejected(tmp_path, capsys):
    p = ModuleParams("1/2", "1/16")
    src = tmp_path / "v.json"
    src.write_text(json.dumps(VermaVector.lowest(p).to_json()))
    code, _, err = run(capsys, "project", str(src))
    assert code == EXIT_INVALID and "block D" in err


def test_verify_suite_subset_is_deterministic(capsys, monkeypatch):
    monkeypatch.setenv("VIRASORO_THREADS", "1")
    code1, out1, err1 = run(capsys, "verify", "--suite", "2,4")
    monkeypatch.setenv("VIRASORO_THREADS", "2")
    code2, out2, _ = run(capsys, "verify", "--suite", "2,4")
    assert code1 == code2 == EXIT_OK
    assert out1 == out2
    assert [line.split(":")[0] for line in err1.strip().splitlines()] == ["PASS criterion 2", "PASS criterion 4"]


def test_bad_thread_count(capsys, monkeypatch):
    monkeypatch.setenv("VIRASORO_THREADS", "many")
    code, _, _ = run(capsys, "verify", "--suite", "2")
    assert code == EXIT_INVALID


def test_module_entry_point():
    env = dict(os.environ, VIRASORO_THREADS="1")
    proc = subprocess.run([sys.executable, "-m", "virasoro_ext", "classify", "--c", "7", "--h", "3"],
                          capture_output=True, text=True, env=env, timeout=120)
    assert proc.returncode == EXIT_OK
    assert json.loads(proc.stdout)["case"] == "A"


def test_failed_exit_code_constant():
    assert EXIT_FAILED == 1
