"""Config parsing, reports, plot data and the command line."""

import csv
import json

import numpy as np
import pytest

from mep_string.cli import main
from mep_string.config import parse_config, parse_study_config
from mep_string.errors import ParseError, ValidationError
from mep_string.experiments import StabilityTrace, StudyRow, StudyTable
from mep_string.potential import DoubleWell
from mep_string.reporting import (
    TRACE_COLUMNS,
    emit_plotdata,
    emit_report,
    load_report,
    read_study_table,
    read_trace,
    write_study_table,
)
from mep_string.solver import RunReport, SolverConfig, Termination, initial_string, run


@pytest.fixture(scope="module")
def report():
    p = DoubleWell()
    x0 = initial_string(p, *p.minima(), 12, "arc", 0.3, h=0.2)
    return run(SolverConfig(h=0.2, max_steps=50), p, x0, lipschitz=44.0)


def series(path):
    with open(path, newline="") as fh:
        return {row["series"] for row in csv.DictReader(fh)}


class TestParseConfig:
    def test_minimal_defaults(self):
        cfg = parse_config('{"potential": {"name": "double-well"}}')
        assert cfg.solver["K"] == 1.5 and cfg.solver["dt"] == 1e-3
        assert cfg.solver["integrator"] == "euler" and cfg.init["n_images"] == 32
        assert cfg.solver["tol_residual"] == 1e-6

    def test_K_must_exceed_one(self):
        with pytest.raises(ValidationError) as err:
            parse_config('{"potential": {"name": "double-well"}, "solver": {"K": 0.9}}')
        assert ("solver.K", "must satisfy K > 1") in err.value.errors

    def test_unknown_key_named(self):
        with pytest.raises(ValidationError) as err:
            parse_config('{"potential": {"name": "double-well"}, "solver": {"dtt": 0.1}}')
        assert err.value.errors[0][0] == "solver.dtt"

    def test_all_errors_collected(self):
        text = json.dumps({
            "potential": {"name": "double-well", "params": {"b": 1}},
            "solver": {"h": -1, "dt": 0, "integrator": "leapfrog"},
            "init": {"kind": "zigzag"},
            "extra": 1,
        })
        with pytest.raises(ValidationError) as err:
            parse_config(text)
        paths = {p for p, _ in err.value.errors}
        assert {"extra", "potential.params.b", "solver.h", "solver.dt", "solver.integrator", "init.kind"} <= paths

    def test_parse_error_position(self):
        with pytest.raises(ParseError) as err:
            parse_config('{\n  "potential": ,\n}')
        assert (err.value.line, err.value.column) == (2, 16)

    def test_name_required(self):
        with pytest.raises(ValidationError) as err:
            parse_config("{}")
        assert ("potential.name", "required") in err.value.errors

    def test_study_config(self):
        sc = parse_study_config(json.dumps({
            "potential": {"name": "double-well"},
            "grid": {"h": [0.2, 0.1], "dt": [4e-3], "schemes": ["euler", "heun"]},
        }))
        assert sc.reference["kind"] == "analytic" and sc.init["kind"] == "perturbed"
        with pytest.raises(ValidationError):
            parse_study_config('{"potential": {"name": "double-well"}, "grid": {"h": [], "dt": [1]}}')


class TestReports:
    def test_json_round_trip(self, report, tmp_path):
        emit_report(report, "json", tmp_path / "r.json")
        back = load_report(tmp_path / "r.json")
        assert back.final_string == report.final_string
        assert back.iterations == report.iterations
        assert back.barrier == report.barrier and back.tau == report.tau
        np.testing.assert_array_equal(back.saddle, report.saddle)
        assert back.config == report.config and back.saddle_class == report.saddle_class
        assert json.loads((tmp_path / "r.json").read_text())["schema_version"] == 1

    def test_csv_header_and_round_trip(self, report, tmp_path):
        emit_report(report, "csv", tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "step,sim_time,spacing,total_length,n_images,reparametrized,images_added,residual,d_to_reference"
        assert len(lines) == 51
        back = read_trace(tmp_path / "t.csv")
        for a, b in zip(back, report.iterations):
            assert [getattr(a, c) for c in TRACE_COLUMNS] == [getattr(b, c) for c in TRACE_COLUMNS]

    def test_empty_iterations(self, report, tmp_path):
        empty = RunReport(report.final_string, [], None, None, None, Termination.MAX_STEPS)
        emit_report(empty, "csv", tmp_path / "t.csv")
        assert len((tmp_path / "t.csv").read_text().splitlines()) == 1
        emit_report(empty, "json", tmp_path / "r.json")
        assert load_report(tmp_path / "r.json").iterations == []

    def test_bad_format(self, report, tmp_path):
        with pytest.raises(ValueError):
            emit_report(report, "xml", tmp_path / "r.xml")

    def test_study_table_round_trip(self, tmp_path):
        t = StudyTable([StudyRow(0.2, 4e-3, "euler", 12, 100, 1e-3, 1e-6, "residual_met", 1.0)])
        write_study_table(t, tmp_path / "s.csv")
        assert read_study_table(tmp_path / "s.csv").rows[0].error_dH == 1e-3


class TestPlotData:
    def test_run_report(self, report, tmp_path):
        emit_plotdata(report, tmp_path / "p.csv")
        assert series(tmp_path / "p.csv") == {"residual", "spacing", "final_string"}

    def test_study_table(self, tmp_path):
        rows = [StudyRow(h, dt, "euler", error_dH=h * dt) for h in (0.2, 0.1) for dt in (4e-3, 2e-3)]
        emit_plotdata(StudyTable(rows, {"vertices": [[-1, 0], [0, 0], [1, 0]]}), tmp_path / "p.csv")
        assert series(tmp_path / "p.csv") == {"error_dH dt=0.004 euler", "error_dH dt=0.002 euler", "reference"}

    def test_stability_trace(self, tmp_path):
        emit_plotdata(StabilityTrace(np.array([0.0, 1.0]), np.array([0.1, 0.01]), 0.1), tmp_path / "p.csv")
        assert series(tmp_path / "p.csv") == {"d_H"}


class TestCommandLine:
    def test_print_defaults(self, capsys):
        assert main(["--print-defaults"]) == 0
        assert json.loads(capsys.readouterr().out)["solver"]["K"] == 1.5
        assert main(["solve", "--print-defaults"]) == 0

    def test_solve_converged_exit_zero(self, tmp_path):
        code = main(["solve", "--potential", "double-well", "--init", "arc", "--amplitude", "0.3",
                     "--n-images", "16", "--dt", "2e-3", "--out", str(tmp_path / "r.json"),
                     "--trace", str(tmp_path / "t.csv")])
        assert code == 0
        rep = load_report(tmp_path / "r.json")
        assert rep.converged and abs(rep.barrier - 1) < 1e-6
        assert len(read_trace(tmp_path / "t.csv")) == len(rep.iterations)

    def test_solve_not_converged_exit_one(self):
        assert main(["solve", "--init", "arc", "--amplitude", "0.3", "--max-steps", "5"]) == 1

    def test_config_file_with_override(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"potential": {"name": "double-well"},
                                   "solver": {"max_steps": 3}, "init": {"kind": "arc", "amplitude": 0.3},
                                   "output": {"report": str(tmp_path / "r.json")}}))
        assert main(["solve", "--config", str(cfg), "--max-steps", "4"]) == 1
        assert len(load_report(tmp_path / "r.json").iterations) == 4

    def test_invalid_config_exit_two(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"potential": {"name": "double-well"}, "solver": {"K": 0.9, "dtt": 1}}')
        assert main(["solve", "--config", str(cfg)]) == 2
        err = capsys.readouterr().err
        assert "solver.K" in err and "solver.dtt" in err

    def test_study(self, tmp_path, single_thread):
        cfg = tmp_path / "s.json"
        cfg.write_text(json.dumps({"potential": {"name": "double-well"},
                                   "grid": {"h": [0.2], "dt": [4e-3]}}))
        assert main(["study", "--config", str(cfg), "--out", str(tmp_path / "t.csv"),
                     "--plotdata", str(tmp_path / "p.csv")]) == 0
        assert len(read_study_table(tmp_path / "t.csv").rows) == 1

    def test_probe_one_sided(self, tmp_path):
        out = tmp_path / "o.json"
        assert main(["probe", "--kind", "one-sided", "--samples", "5", "--eta", "0.1", "0.05",
                     "--out", str(out)]) == 0
        assert len(json.loads(out.read_text())["result"]["rows"]) == 2

    def test_probe_stability(self, tmp_path):
        out = tmp_path / "s.json"
        assert main(["probe", "--kind", "stability", "--horizon", "2", "--checkpoints", "3",
                     "--out", str(out), "--plotdata", str(tmp_path / "p.csv")]) == 0
        assert len(json.loads(out.read_text())["result"]["d_H_values"]) == 3
