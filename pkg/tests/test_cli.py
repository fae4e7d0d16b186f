import json
import subprocess
import sys
from pathlib import Path

import pytest

from posobs import scenario as scn
from posobs.cli import main
from posobs.fixtures import EXAMPLES, example_dict

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def values(text):
    out = {}
    for line in text.splitlines():
        if " = " in line and not line.startswith("#"):
            k, v = line.split(" = ", 1)
            out[k] = v
    return out


def test_check_ex1(capsys):
    code, out, _ = run(["check", str(SCENARIOS / "ex1.json")], capsys)
    v = values(out)
    assert code == 0
    assert all(v[f"cond6{c}"] == "0 pass" for c in "abcdef")
    assert all(float(v[k]) == 0.9 for k in ("rho_cl", "rho_up", "rho_low", "rho_ext"))


def test_check_ex1_generic(capsys):
    code, out, _ = run(["check", str(SCENARIOS / "ex1.json"), "--generic"], capsys)
    assert code == 1 and values(out)["cond10c"] == "-0.3 FAIL"


def test_check_ex3(capsys):
    code, out, _ = run(["check", str(SCENARIOS / "ex3.json")], capsys)
    v = values(out)
    assert code == 1
    assert [float(v[f"cond17{c}"].split()[0]) for c in "abc"] == pytest.approx([0.01, 0.008, 0.012])
    assert float(v["rho_cl"]) == pytest.approx(1.009902, abs=1e-6)
    assert v["stability_ok"] == "false"


def test_synth_modes(capsys, tmp_path):
    code, out, _ = run(["synth", str(SCENARIOS / "ex1.json"), "--mode", "thm1"], capsys)
    assert code == 1 and "stage-infeasible at observer stage" in out
    gains = tmp_path / "g.json"
    code, out, _ = run(["synth", str(SCENARIOS / "ex1.json"), "--mode", "coupled",
                        "--out", str(gains)], capsys)
    assert code == 0 and values(out)["invariance_ok"] == "true"
    data = example_dict("ex1")
    data["gains"] = json.loads(gains.read_text())
    sc_path = tmp_path / "s.json"
    sc_path.write_text(json.dumps(data))
    assert run(["check", str(sc_path)], capsys)[0] == 0
    assert run(["synth", str(SCENARIOS / "ex2.json"), "--mode", "coupled"], capsys)[0] == 0


def test_simulate_csv(capsys, tmp_path):
    out_csv = tmp_path / "a.csv"
    code, out, _ = run(["simulate", str(SCENARIOS / "ex1.json"), "--T", "50",
                        "--out", str(out_csv)], capsys)
    lines = out_csv.read_text().splitlines()
    assert code == 0 and "ordering: none" in out
    assert lines[0] == "t,x1,xbar1,xlow1" and len(lines) == 52
    digits = lines[2].split(",")[1].replace(".", "").lstrip("0")
    assert len(digits) >= 12


def test_simulate_full_and_zero_preset(capsys, tmp_path):
    data = example_dict("ex1")
    data["simulation"].update(x0="zeros", xbar0="zeros", xlow0="zeros")
    p = tmp_path / "z.json"
    p.write_text(json.dumps(data))
    code, out, _ = run(["simulate", str(p), "--T", "5", "--full"], capsys)
    lines = out.splitlines()
    assert lines[0] == "t,x1,xbar1,xlow1,x2,xbar2,xlow2"
    assert all(float(v) == 0 for row in lines[1:] for v in row.split(",")[1:])


def test_simulate_noisy_is_reproducible(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for f in (a, b):
        code, _, _ = run(["simulate", str(SCENARIOS / "ex3.json"), "--noisy", "--seed", "7",
                          "--out", str(f)], capsys)
        assert code == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.csv"
    run(["simulate", str(SCENARIOS / "ex3.json"), "--noisy", "--seed", "8", "--out", str(c)],
        capsys)
    assert c.read_bytes() != a.read_bytes()


def test_simulate_monte_carlo(capsys, tmp_path):
    code, out, _ = run(["simulate", str(SCENARIOS / "scalar.json"), "--noisy", "--N", "200",
                        "--T", "50", "--out", str(tmp_path / "m.csv")], capsys)
    assert code == 0 and "ensemble mean ordering" in out


def test_fixed_point(capsys):
    code, out, _ = run(["fixed-point", str(SCENARIOS / "scalar.json")], capsys)
    assert code == 0 and "X* = [0.2, 0.233333333333, 0.1]" in out
    code, out, _ = run(["fixed-point", str(SCENARIOS / "ex3.json")], capsys)
    assert code == 1 and "attracting = false" in out


def test_fixed_point_without_noise_is_input_error(capsys):
    code, _, err = run(["fixed-point", str(SCENARIOS / "ex1.json")], capsys)
    assert code == 2 and "system" in err


@pytest.mark.parametrize("name,csv,code", [("ex1", "state_bounds.csv", 0),
                                           ("ex2", "state_bounds.csv", 0),
                                           ("ex3", "state_bounds_noisy.csv", 1)])
def test_repro(name, csv, code, capsys, tmp_path):
    got, out, _ = run(["repro", name, "--out", str(tmp_path)], capsys)
    assert got == code
    assert (tmp_path / csv).exists()
    script = next(tmp_path.glob("*.gp")).read_text()
    assert csv in script
    v = values(out)
    if name == "ex2":
        assert float(v["min_entry"]) >= -1e-9
    if name == "ex3":
        assert "spectral radius above 1" in out
        assert v["cond17b"] == "0.008 pass"


class TestInputErrors:
    def test_malformed_json(self, capsys, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{"system": {"A": [[1, 2]]\n')
        code, _, err = run(["check", str(p)], capsys)
        assert code == 2 and "line" in err

    def test_bad_field(self, capsys, tmp_path):
        data = example_dict("ex1")
        data["gains"]["K_upper"] = [[0, 1, 2]]
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(data))
        code, _, err = run(["check", str(p)], capsys)
        assert code == 2 and "gains" in err

    def test_unknown_preset(self, capsys, tmp_path):
        data = example_dict("ex1")
        data["simulation"]["x0"] = "random"
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(data))
        code, _, err = run(["simulate", str(p)], capsys)
        assert code == 2 and "simulation.x0" in err

    def test_missing_gains(self, capsys, tmp_path):
        data = example_dict("ex1")
        del data["gains"]
        p = tmp_path / "s.json"
        p.write_text(json.dumps(data))
        assert run(["check", str(p)], capsys)[0] == 2

    def test_non_positive_plant(self, capsys, tmp_path):
        data = example_dict("ex2")
        data["system"]["positivization_mode"] = False
        p = tmp_path / "s.json"
        p.write_text(json.dumps(data))
        code, _, err = run(["check", str(p)], capsys)
        assert code == 2 and "A[1, 0]" in err

    def test_missing_file(self, capsys):
        assert run(["check", "/nonexistent/x.json"], capsys)[0] == 2

    def test_bad_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["check"])
        assert exc.value.code == 2


@pytest.mark.parametrize("name", sorted(EXAMPLES))
def test_round_trip(name):
    sc = scn.from_dict(example_dict(name))
    text = sc.dumps()
    again = scn.loads(text)
    assert again.dumps() == text
    assert json.loads(text) == json.loads(json.dumps(example_dict(name)))


def test_bundled_files_match_fixtures():
    for name in EXAMPLES:
        assert json.loads((SCENARIOS / f"{name}.json").read_text()) == example_dict(name)


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "posobs.cli", "check",
                          str(SCENARIOS / "ex1.json")], capture_output=True, text=True)
    assert res.returncode == 0 and "rho_ext = 0.9" in res.stdout
