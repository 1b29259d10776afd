import json

import pytest

from core.errors import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION
from core.exporter import read_series
from core.history_manager import HistoryManager
from main import build_parser, main


class TestValidate:
    def test_bundled_scenario(self, scenarios_dir, capsys):
        assert main(["validate", str(scenarios_dir / "reference_flight.json")]) == EXIT_OK
        out = capsys.readouterr().out
        assert "ok (8 oscillators, 10 edges, 4 events" in out

    def test_dump_applies_defaults(self, scenarios_dir, capsys):
        assert main(["validate", "--dump", str(scenarios_dir / "two_node.json")]) == EXIT_OK
        document = json.loads(capsys.readouterr().out)
        assert document["wing"]["span"] == 0.32
        assert document["name"] == "two_node"

    def test_invalid_scenario(self, write_scenario, capsys):
        assert main(["validate", write_scenario("")]) == EXIT_VALIDATION
        assert "missing required section: oscillators" in capsys.readouterr().err


class TestCoeffs:
    def test_table(self, capsys):
        assert main(["coeffs", "--alpha-range=0:45:45"]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "alpha_deg,CL,CD"
        assert len(lines) == 3
        alpha, cl, cd = (float(v) for v in lines[2].split(","))
        assert alpha == 45.0
        assert cl == pytest.approx(1.804561, abs=1e-5)
        assert cd == pytest.approx(1.703746, abs=1e-5)

    def test_spaced_range_accepts_a_negative_start(self, capsys):
        assert main(["coeffs", "--alpha-range", "-10", "30", "20"]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert [float(line.split(",")[0]) for line in lines[1:]] == [-10.0, 10.0, 30.0]

    def test_bad_range_is_a_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["coeffs", "--alpha-range=0:45"])
        assert exc.value.code == 2


class TestAnalyzeSync:
    def test_report(self, scenarios_dir, capsys):
        assert main(["analyze-sync", str(scenarios_dir / "config_a_sync.json")]) == EXIT_OK
        out = capsys.readouterr().out
        assert "lambda_min = 0.198" in out
        assert "guaranteed contraction rate" in out

    def test_gain_override(self, scenarios_dir, capsys):
        assert main(["analyze-sync", str(scenarios_dir / "config_a_sync.json"), "--k", "40"]) == EXIT_OK
        assert "k_min" in capsys.readouterr().out


class TestSimulate:
    def test_writes_series_and_summary(self, scenarios_dir, tmp_path, capsys):
        out = tmp_path / "run.csv"
        summary = tmp_path / "summary.json"
        code = main(["simulate", str(scenarios_dir / "two_node.json"), "--duration", "0.1",
                     "--out", str(out), "--summary-json", str(summary)])
        assert code == EXIT_OK
        series = read_series(out)
        assert series["metadata"]["scenario"] == "two_node"
        assert len(series["rows"]) == 11
        assert series["error"] is None
        record = json.loads(summary.read_text(encoding="utf-8"))
        assert record["rows"] == 11
        lines = capsys.readouterr().out.splitlines()
        assert any(line.startswith("rows") and line.endswith(": 11") for line in lines)

    def test_stdout_series(self, scenarios_dir, capsys):
        assert main(["simulate", str(scenarios_dir / "two_node.json"), "--duration", "0"]) == EXIT_OK
        captured = capsys.readouterr()
        data = [line for line in captured.out.splitlines() if not line.startswith("#")]
        assert data[0].startswith("t,mode,sigma")
        assert len(data) == 1
        assert "final mode" in captured.err

    def test_runtime_abort(self, sync_document, write_scenario, tmp_path, capsys):
        sync_document["topology"]["k"] = 1e9
        code = main(["simulate", write_scenario(sync_document), "--out", str(tmp_path / "run.csv")])
        assert code == EXIT_RUNTIME
        assert "oscillator-network" in capsys.readouterr().err

    def test_history_is_recorded(self, scenarios_dir, history_db, capsys):
        args = ["simulate", str(scenarios_dir / "two_node.json"), "--duration", "0.05", "--history",
                "--db", history_db]
        assert main(args) == EXIT_OK
        runs = HistoryManager(history_db).get_recent_runs()
        assert len(runs) == 1
        assert runs[0]["status"] == "ok"
        capsys.readouterr()
        assert main(["history", "--db", history_db]) == EXIT_OK
        assert "two_node" in capsys.readouterr().out

    def test_negative_duration_is_a_usage_error(self, scenarios_dir):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", str(scenarios_dir / "two_node.json"), "--duration", "-1"])
        assert exc.value.code == 2


class TestParser:
    def test_command_is_required(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args([])
        assert exc.value.code == 2

    def test_lift_study_defaults(self):
        args = build_parser().parse_args(["lift-study"])
        assert args.delta21 == [90.0]
        assert args.cycles == 10


class TestBatch:
    def test_directory_of_scenarios(self, two_node_document, write_scenario, tmp_path, capsys):
        write_scenario(two_node_document, "two_node.json")
        assert main(["batch", str(tmp_path)]) == EXIT_OK
        assert "completed" in capsys.readouterr().out

    def test_empty_directory(self, tmp_path, capsys):
        assert main(["batch", str(tmp_path)]) == EXIT_VALIDATION
        assert "no scenario files found" in capsys.readouterr().err
