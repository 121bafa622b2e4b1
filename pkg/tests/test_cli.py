import json
import subprocess
import sys

import pytest

from jetlab.cli import main
from jetlab.config import bundled_path


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def write_config(tmp_path, **changes):
    cfg = json.loads(bundled_path("rotation.json").read_text())
    cfg.update(changes)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_analyze_rotation(tmp_path):
    assert run(tmp_path, "analyze", "rotation", "--seed", "7") == 0
    first = (tmp_path / "analysis.json").read_bytes()
    d = json.loads(first)
    assert d["points"][0]["em_field"]["1,1,2"] == -1.0
    assert d["points"][0]["drift_sign"]["best_sign"] == "-"
    assert d["einstein"]["T_tt"] == {"1,1": 0.0}
    # reruns are byte-identical
    assert run(tmp_path, "analyze", "rotation", "--seed", "7") == 0
    assert (tmp_path / "analysis.json").read_bytes() == first


def test_analyze_reports_prolongation(tmp_path):
    assert run(tmp_path, "analyze", "oscillator_order2") == 0
    d = json.loads((tmp_path / "analysis.json").read_text())
    assert d["prolongation"]["n_tilde"] == 2
    assert d["prolongation"]["dim_J1"] == 5


def test_solve_writes_map(tmp_path, capsys):
    assert run(tmp_path, "solve", "rotation") == 0
    assert "converged" in capsys.readouterr().out
    rows = (tmp_path / "map.csv").read_text().splitlines()
    assert rows[0] == "t1,x1,x2,L"
    assert len(rows) == 2002
    first = [float(v) for v in rows[1].split(",")]
    assert len(first) == 1 + 2 + 1
    assert first[:3] == [0.0, 1.0, 0.0]
    assert abs(first[3]) <= 1e-4
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["status"] == "converged"
    assert s["final_energy"] <= 1e-6
    assert s["max_error_vs_exact"] <= 1e-3


def test_verify_report(tmp_path):
    assert run(tmp_path, "verify", "gradient", "--samples", "20") == 0
    d = json.loads((tmp_path / "report.json").read_text())
    assert d["pass"] is True
    assert d["maxwell_eq2_max_residual"] <= 1e-9
    assert d["sign_findings"]["drift_F"]
    assert all("name" in c for c in d["checks"])


def test_reduce(tmp_path, capsys):
    assert run(tmp_path, "reduce", "oscillator_order2") == 0
    assert "n_tilde = 2" in capsys.readouterr().out
    d = json.loads((tmp_path / "oscillator_order2_reduced.json").read_text())
    assert d["X"] == [["x2"], ["-x1"]]
    assert "scenario" not in d
    # the reduced system is itself a valid config
    assert run(tmp_path, "analyze", str(tmp_path / "oscillator_order2_reduced.json")) == 0


def test_reduce_requires_higher_order(tmp_path, capsys):
    assert run(tmp_path, "reduce", "rotation") == 2
    assert "higher_order" in capsys.readouterr().err


def test_asymmetric_metric_is_an_input_error(tmp_path, capsys):
    path = write_config(tmp_path, metric_phi=[["1", "x1"], ["0", "1"]])
    assert run(tmp_path, "analyze", str(path)) == 2
    err = capsys.readouterr().err
    assert "metric_phi" in err and "[1][2]" in err


@pytest.mark.parametrize("changes, needle", [
    ({"metric_h": [["1 +"]]}, "offset"),
    ({"grid": [3]}, "grid"),
    ({"domain": {"min": [1.0], "max": [0.0]}}, "min"),
    ({"metric_h": [["-1"]]}, "metric_h"),
    ({"metric_h": [["2"]]}, "orbits"),
])
def test_input_errors_exit_2(tmp_path, capsys, changes, needle):
    path = write_config(tmp_path, **changes)
    assert run(tmp_path, "analyze", str(path)) == 2
    assert needle in capsys.readouterr().err


def test_indefinite_metric_is_an_input_error(tmp_path, capsys):
    path = write_config(tmp_path, X=[["-x2"], ["x1"]], metric_phi=[["1", "0"], ["0", "-1"]])
    cfg = json.loads(path.read_text())
    del cfg["scenario"]
    path.write_text(json.dumps(cfg))
    assert run(tmp_path, "analyze", str(path)) == 2
    err = capsys.readouterr().err
    assert "metric_phi" in err and "positive definite" in err


def test_missing_config(tmp_path, capsys):
    assert run(tmp_path, "analyze", str(tmp_path / "nope.json")) == 2


def test_bad_sample_count(tmp_path):
    assert run(tmp_path, "analyze", "rotation", "--samples", "0") == 2


def test_console_script(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-c", "from jetlab.cli import main; raise SystemExit(main())",
         "analyze", "gradient", "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "analysis.json").exists()
