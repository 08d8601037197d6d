import csv
import io
import json
import shutil
import subprocess

import pytest

from melopt.copt.bnb import TRACE_FIELDS
from melopt.harness.cli import EXIT_BUDGET, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, main
from melopt.harness.export import load_records, strip_timing


def write_config(tmp_path, name="cfg.json", **doc):
    doc = {"orchestrators": 2, "learners": 5, **doc}
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def test_solve_writes_json(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["solve", "--config", cfg, "--method", "aat"]) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["record"]["method"] == "aat"
    assert payload["report"]["feasible"]
    assert len(payload["solution"]["association"]) == 5


def test_solve_trace_and_verbose(tmp_path, capsys):
    cfg = write_config(tmp_path, solver={"max_nodes": 20})
    trace = tmp_path / "trace.csv"
    out = tmp_path / "sol.json"
    code = main(["solve", "--config", cfg, "--method", "copt", "--trace", str(trace), "--out", str(out), "--verbose"])
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(trace.read_text())))
    assert tuple(rows[0]) == TRACE_FIELDS and rows[0]["parent"] == "-1"
    assert capsys.readouterr().err == trace.read_text()
    assert "trace_csv" not in json.loads(out.read_text())["report"]["stats"]


def _raw(path):
    with open(path, newline="") as fh:
        return fh.read()


def test_compare_csv_is_reproducible(tmp_path):
    cfg = write_config(tmp_path)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["compare", "--config", cfg, "--methods", "aat,fba,lfba", "--out", str(a)]) == EXIT_OK
    assert main(["compare", "--config", cfg, "--methods", "aat,fba,lfba", "--out", str(b), "--jobs", "2"]) == EXIT_OK
    assert strip_timing(_raw(a)) == strip_timing(_raw(b))
    assert [r.method for r in load_records(a)] == ["aat", "fba", "lfba"]


def test_sweep_pareto_and_plot(tmp_path, capsys):
    cfg = write_config(tmp_path)
    records = tmp_path / "p.json"
    code = main(["pareto", "--config", cfg, "--runs", "1", "--alphas", "0.2,0.5,0.8", "--methods", "aat", "--out", str(records)])
    assert code == EXIT_OK
    assert capsys.readouterr().err.count("aat ") == 3
    svg = tmp_path / "p.svg"
    assert main(["plot", "--kind", "pareto", "--in", str(records), "--out", str(svg)]) == EXIT_OK
    assert 'id="pareto-aat"' in svg.read_text()
    sweep_out = tmp_path / "s.csv"
    code = main(["sweep", "--config", cfg, "--runs", "1", "--axis", "T_max", "--values", "300,660", "--methods", "lfba", "--out", str(sweep_out)])
    assert code == EXIT_OK
    assert [r.t_max for r in load_records(sweep_out)] == [300.0, 660.0]


def test_fit_bound_prints_coefficients(tmp_path, capsys):
    out = tmp_path / "grid.csv"
    assert main(["fit-bound", "--out", str(out)]) == EXIT_OK
    line = capsys.readouterr().out
    assert line.startswith("c1=101.652076") and "mode=unit" in line
    rows = out.read_text().splitlines()
    assert rows[0] == "tau,G,bound,fitted" and len(rows) == 1 + 20 * 50


@pytest.mark.parametrize(
    "doc, code, stream",
    [
        ({"solver": {"alpha": 1.5}}, EXIT_CONFIG, "config error: solver.alpha"),
        ({"learning": {"T_max": 1e-3}}, EXIT_INFEASIBLE, "infeasible:"),
        ({"orchestrators": 3, "learners": 12, "solver": {"method": "oracle"}}, EXIT_BUDGET, "budget exhausted:"),
    ],
)
def test_exit_codes(tmp_path, capsys, doc, code, stream):
    cfg = write_config(tmp_path, **doc)
    assert main(["solve", "--config", cfg]) == code
    assert stream in capsys.readouterr().err


def test_missing_files_and_bad_values(tmp_path, capsys):
    assert main(["solve", "--config", str(tmp_path / "nope.json")]) == EXIT_CONFIG
    cfg = write_config(tmp_path)
    assert main(["sweep", "--config", cfg, "--axis", "alpha", "--values", "0.9,0.1", "--runs", "1"]) == EXIT_CONFIG
    assert main(["plot", "--kind", "sweep", "--in", str(tmp_path / "none.csv"), "--out", str(tmp_path / "x.svg")]) == EXIT_CONFIG


@pytest.mark.skipif(shutil.which("melopt") is None, reason="console script not installed")
def test_console_script(tmp_path):
    cfg = write_config(tmp_path)
    done = subprocess.run(["melopt", "solve", "--config", cfg, "--method", "lfba"], capture_output=True, text=True)
    assert done.returncode == 0
    assert json.loads(done.stdout)["record"]["method"] == "lfba"
