import csv
import io
import json
import math
import subprocess
import sys

import pytest

from transborel.cli import _complex, config_hash, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO("".join(l for l in text.splitlines(True) if not l.startswith("#")))))


def test_coeffs_euler(capsys):
    code, out, err = run(capsys, "coeffs", "--preset", "euler", "--order", "20")
    assert code == 0 and out.startswith("# config_hash=")
    r = rows(out)
    assert len(r) == 20
    assert all(int(x["exact"]) == math.factorial(int(x["k"]) - 1) for x in r)


def test_coeffs_p1(capsys):
    code, _, err = run(capsys, "coeffs", "--preset", "p1", "--order", "10")
    assert code == 0 and "ok: True" in err


def test_invalid_preset(capsys):
    code, _, err = run(capsys, "coeffs", "--preset", "nope")
    assert code == 2 and "unknown preset" in err


def test_nonpositive_order(capsys):
    code, _, err = run(capsys, "coeffs", "--preset", "euler", "--order", "0")
    assert code == 2


@pytest.mark.parametrize("argv", [("--preset", "euler_minus"), ("--preset", "euler", "--branch", "+")])
def test_borel_sum_euler(capsys, argv):
    code, out, _ = run(capsys, "borel-sum", *argv, "--x", "5")
    assert code == 0
    r = rows(out)[0]
    assert float(r["residual"]) < 1e-8 and float(r["error_bound"]) < 1e-8


def test_borel_sum_cubic(capsys):
    code, out, err = run(capsys, "borel-sum", "--preset", "cubic", "--x", "10@pi/6", "--exp-order", "2",
                         "--C", "1", "--tol", "1e-6")
    assert code == 0
    r = rows(out)[0]
    assert float(r["residual"]) < 1e-6 and float(r["nu"]) == 8.0 and float(r["K_nu"]) < 1


def test_borel_sum_margin(capsys):
    code, _, err = run(capsys, "borel-sum", "--preset", "cubic", "--x", "2@pi/6")
    assert code == 3 and "nu = 8" in err


def test_borel_sum_forced_nu_fails(capsys):
    code, _, err = run(capsys, "borel-sum", "--preset", "cubic", "--x", "10@pi/6", "--nu", "1")
    assert code == 3 and "K =" in err


def test_borel_sum_stokes_line_needs_branch(capsys):
    code, _, err = run(capsys, "borel-sum", "--preset", "cubic", "--x", "10", "--angle", "0")
    assert code == 2


def test_stokes_cubic(capsys, tmp_path):
    code, out, err = run(capsys, "stokes", "--preset", "cubic", "--out", str(tmp_path))
    assert code == 0
    d = json.loads((tmp_path / "stokes.json").read_text())
    assert d["agreement"] < 0.05
    assert d["config_hash"] and "config" in d


def test_stokes_analytic(capsys, tmp_path):
    code, _, _ = run(capsys, "stokes", "--preset", "analytic_control", "--out", str(tmp_path))
    d = json.loads((tmp_path / "stokes.json").read_text())
    assert code == 0 and math.hypot(*d["S1"]) < 1e-6


def test_stokes_missing_y1(capsys):
    code, _, err = run(capsys, "stokes", "--preset", "cubic", "--exp-order", "0")
    assert code == 2 and "Y1" in err


def test_decompose_default(capsys, tmp_path):
    code, _, _ = run(capsys, "decompose", "--out", str(tmp_path))
    d = json.loads((tmp_path / "decompose.json").read_text())
    assert code == 0 and 0.4 <= d["theta1"] <= 0.6 and d["reconstruction_exact"]
    assert d["seed"] == 0


def test_decompose_forced(capsys, tmp_path):
    code, _, _ = run(capsys, "decompose", "--force", "0,0", "--out", str(tmp_path))
    d = json.loads((tmp_path / "decompose.json").read_text())
    assert code == 0 and d["theta1"] is None and abs(d["theta2"] - 1) < 0.1


def test_decompose_bad_bounds(capsys):
    code, _, err = run(capsys, "decompose", "--bounds", "1,-1,0,1")
    assert code == 2 and "bounds" in err


def test_kernel(capsys):
    code, out, _ = run(capsys, "kernel", "--zeta1", "1", "--zeta2", "0.5,2")
    r = rows(out)
    assert code == 0 and len(r) == 2
    assert all(abs(float(x["C"]) - float(x["closed_form"])) < 1e-8 for x in r)


def test_verify_erfmix(capsys):
    code, out, _ = run(capsys, "verify", "--preset", "erfmix", "--order", "20")
    assert code == 0 and json.loads(out)["config_hash"]


def test_config_file_overrides(capsys, tmp_path):
    cfgp = tmp_path / "run.json"
    cfgp.write_text(json.dumps({"order": 5}))
    code, out, _ = run(capsys, "coeffs", "--preset", "euler", "--order", "20", "--config", str(cfgp))
    assert code == 0 and len(rows(out)) == 5


def test_determinism(capsys, tmp_path):
    outs = []
    for d in ("a", "b"):
        p = tmp_path / d
        assert main(["borel-sum", "--preset", "euler_minus", "--x", "3,5", "--out", str(p)]) == 0
        assert main(["decompose", "--out", str(p)]) == 0
        outs.append([(p / f).read_bytes() for f in ("borel_sum.csv", "decompose.json", "decompose_parts.csv")])
    capsys.readouterr()
    assert outs[0] == outs[1]


def test_config_hash_ignores_out():
    assert config_hash({"a": 1, "out": "x"}) == config_hash({"a": 1, "out": "y"})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_complex_parse():
    assert abs(_complex("10@pi/6") - 10 * complex(math.cos(math.pi / 6), math.sin(math.pi / 6))) < 1e-12
    assert _complex("3+2i") == 3 + 2j
    with pytest.raises(Exception):
        _complex("1@__import__('os')")


def test_console_script():
    r = subprocess.run([sys.executable, "-m", "transborel.cli", "coeffs", "--preset", "nope"],
                       capture_output=True, text=True)
    assert r.returncode == 2
