import csv
import json
from pathlib import Path

import jsonschema
import pytest

from bprk.cli import fmt, main

SCHEMA = json.loads((Path(__file__).parents[1] / "docs" / "summary.schema.json").read_text())
CONFIGS = Path(__file__).parents[1] / "configs"


def _run(tmp_path, name, *args):
    out = tmp_path / name
    code = main(["run", "--out", str(out), *args])
    return code, out


def test_run_writes_outputs_and_valid_summary(tmp_path):
    code, out = _run(tmp_path, "a", "--config", str(CONFIGS / "reaction4_free.json"), "--t-end", "2.5")
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    jsonschema.validate(summary, SCHEMA)
    assert summary["completed"] and summary["final_time"] == 2.5
    assert summary["steps_adapted"] > 0
    assert (out / "solution_2.5.csv").exists()
    with open(out / "trace.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == summary["steps_total"]
    assert "drift_mass" in rows[0]


def test_run_is_byte_identical(tmp_path):
    args = ["--problem", "linear2x2", "--method", "ssp33", "--dt", "0.3333333333333333",
            "--adaptation", "free", "--p-start", "2", "--t-end", "1"]
    names = ("trace.csv", "solution_1.csv", "summary.json")
    _, out = _run(tmp_path, "a", *args)
    first = {n: (out / n).read_bytes() for n in names}
    _run(tmp_path, "a", *args)
    for n in names:
        assert (out / n).read_bytes() == first[n]


def test_failed_run_exits_nonzero_with_partial_output(tmp_path):
    cfg = tmp_path / "fail.json"
    cfg.write_text(json.dumps({"problem": "linear2x2", "method": "ssp33", "dt": 0.3333333333333333,
                               "adaptation": "free", "p_start": 3, "p_min": 3, "dt_min": 0.2}))
    code, out = _run(tmp_path, "f", "--config", str(cfg))
    assert code == 1
    summary = json.loads((out / "summary.json").read_text())
    jsonschema.validate(summary, SCHEMA)
    assert not summary["completed"]
    assert summary["rejections"]["rejected-infeasible"] >= 1


def test_adaptive_flag_and_schema(tmp_path):
    code, out = _run(tmp_path, "ad", "--problem", "reaction4", "--method", "dormandprince",
                     "--tol", "1e-5", "--dt", "0.01", "--t-end", "0.5")
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    jsonschema.validate(summary, SCHEMA)
    assert summary["mode"] == "adaptive"


def test_configuration_errors_exit_2(tmp_path, capsys):
    assert main(["run", "--out", str(tmp_path), "--problem", "nope"]) == 2
    assert main(["run", "--out", str(tmp_path), "--method", "rk4", "--mode", "adaptive",
                 "--problem", "linear2x2"]) == 2


def test_dof_table_stdout_and_file(tmp_path, capsys):
    assert main(["dof-table", "--out", str(tmp_path)]) == 0
    printed = capsys.readouterr().out.splitlines()
    assert printed[0] == "table,method,s,p1,p2,p3,p4,p5"
    assert "explicit,Cash-Karp RK5(4)6,6,5,4,2,1,0" in printed
    assert "implicit,Extrapolation BE 4,10,9,8,6,3,---" in printed
    assert (tmp_path / "dof_table.csv").read_text().splitlines() == printed


def test_stability_csv(tmp_path):
    assert main(["stability", "--out", str(tmp_path), "--method", "backwardeuler", "--resolution", "5"]) == 0
    with open(tmp_path / "stability.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["re", "im", "abs_R"]
    assert len(rows) == 26
    for re, im, val in rows[1:]:
        z = complex(float(re), float(im))
        assert float(val) == pytest.approx(abs(1 / (1 - z)))


def test_stability_mix_config(tmp_path):
    assert main(["stability", "--config", str(CONFIGS / "stability_be3_mix.json"), "--out", str(tmp_path),
                 "--resolution", "11"]) == 0
    assert len((tmp_path / "stability.csv").read_text().splitlines()) == 122


def test_convergence_outputs(tmp_path, capsys):
    code = main(["convergence", "--problem", "linear2x2", "--method", "rk4", "--t-end", "1",
                 "--dt", "0.1", "0.05", "0.025", "--out", str(tmp_path)])
    assert code == 0
    res = json.loads((tmp_path / "convergence.json").read_text())
    assert res["slope_unadapted_tail"] == pytest.approx(4.0, abs=0.3)
    assert len((tmp_path / "convergence.csv").read_text().splitlines()) == 4


def test_fmt():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(True) == "1"
    assert fmt(None) == ""
    assert fmt(3) == "3"
