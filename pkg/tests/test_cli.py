import json
import subprocess
import sys

import numpy as np
import pytest

from qsdlab.cli import main, run

TWOCYCLE = """
{
  "states": ["a", "b"],
  "transitions": [["a", "b", 0.8], ["b", "a", 0.5]]
}
"""

REDUCIBLE = """
{
  "states": ["a", "b"],
  "transitions": [["a", "b", 0.5], ["b", "b", 0.7]]
}
"""


@pytest.fixture
def twocycle_path(tmp_path):
    path = tmp_path / "twocycle.json"
    path.write_text(TWOCYCLE)
    return str(path)


def invoke(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out
    return code, out


class TestCommands:
    def test_period_output(self, capsys, twocycle_path):
        code, out = invoke(capsys, ["period", "--chain", twocycle_path])
        assert code == 0
        doc = json.loads(out)
        assert doc["period"] == 2
        assert doc["classes"] == {"a": 0, "b": 1}
        assert doc["schema"] == "qsd-lab/1"

    def test_validate_reports_absorption(self, capsys, twocycle_path):
        code, out = invoke(capsys, ["validate", "--chain", twocycle_path])
        assert code == 0
        doc = json.loads(out)
        assert doc["absorption"]["a"] == pytest.approx(0.2, abs=1e-15)
        assert doc["absorption"]["b"] == pytest.approx(0.5, abs=1e-15)

    def test_spectral_reports_closed_form(self, capsys, twocycle_path):
        code, out = invoke(capsys, ["spectral", "--chain", twocycle_path])
        assert code == 0
        doc = json.loads(out)
        assert doc["theta0"] == pytest.approx(np.sqrt(0.4), abs=1e-15)
        # 17 significant digits appear literally in the document
        assert format(np.sqrt(0.4), ".17g") in out

    def test_reducible_chain_is_an_input_error(self, capsys, tmp_path):
        path = tmp_path / "reducible.json"
        path.write_text(REDUCIBLE)
        code, out = invoke(capsys, ["qsd", "--chain", str(path)])
        assert code == 1
        doc = json.loads(out)
        assert doc["error"]["type"] == "NotStronglyConnected"
        assert doc["ok"] is False

    def test_missing_file_is_an_input_error(self, capsys):
        code, out = invoke(capsys, ["qsd", "--chain", "no_such_file.json"])
        assert code == 1
        assert json.loads(out)["error"]["type"] == "ParseError"

    def test_usage_error_exits_one(self, capsys):
        code, _ = invoke(capsys, ["no-such-command"])
        assert code == 1

    def test_verification_failure_exits_two(self, capsys, twocycle_path):
        code, out = invoke(capsys, [
            "simulate", "--chain", twocycle_path,
            "--paths", "200", "--tolerance", "mc_sigma=0",
        ])
        assert code == 2
        doc = json.loads(out)
        assert doc["ok"] is False

    def test_report_collects_all_sections(self, capsys, twocycle_path):
        code, out = invoke(capsys, [
            "report", "--chain", twocycle_path, "--paths", "2000",
            "--N-max", "200",
        ])
        assert code == 0
        doc = json.loads(out)
        assert set(doc["sections"]) == {
            "validate", "periodicity", "spectral", "qsd", "limits",
            "qprocess", "ergodic", "montecarlo",
        }
        assert doc["ok"] is True


class TestDeterminism:
    def test_report_is_byte_identical(self, twocycle_path, tmp_path):
        args = [
            sys.executable, "-m", "qsdlab.cli", "report",
            "--chain", twocycle_path, "--paths", "1000",
            "--N-max", "100", "--seed", "7",
        ]
        first = subprocess.run(args, capture_output=True, check=False)
        second = subprocess.run(args, capture_output=True, check=False)
        assert first.returncode == 0
        assert first.stdout == second.stdout
        assert first.stdout.endswith(b"}\n")

    def test_different_seed_changes_mc_section_only(self, twocycle_path):
        base = {"chain": twocycle_path, "paths": 1000, "big_n_max": 100}
        doc_a, code_a = run("simulate", dict(base, seed=1))
        doc_b, code_b = run("simulate", dict(base, seed=2))
        assert code_a == code_b == 0
        assert doc_a["conditional_law"] != doc_b["conditional_law"]


class TestSideFiles:
    def test_tsv_and_figures_written(self, capsys, twocycle_path, tmp_path):
        out_dir = tmp_path / "curves"
        code, out = invoke(capsys, [
            "report", "--chain", twocycle_path, "--paths", "500",
            "--N-max", "100", "--tsv-dir", str(out_dir),
        ])
        assert code == 0
        doc = json.loads(out)
        assert sorted(doc["tsv_files"]) == [
            "ergodic_rate.tsv", "limits_decay.tsv", "qprocess_contraction.tsv",
        ]
        for name in doc["tsv_files"]:
            tsv = out_dir / name
            assert tsv.exists()
            header = tsv.read_text().splitlines()[0]
            assert header == "n\tj\tvalue"
        for name in doc["figure_files"]:
            png = out_dir / name
            assert png.exists() and png.stat().st_size > 1000

    def test_out_flag_writes_file(self, capsys, twocycle_path, tmp_path):
        target = tmp_path / "report.json"
        code, out = invoke(capsys, [
            "period", "--chain", twocycle_path, "--out", str(target),
        ])
        assert code == 0
        assert out == ""
        assert json.loads(target.read_text())["period"] == 2


class TestRunApi:
    def test_sections_for_single_command(self, twocycle_path):
        doc, code = run("qsd", {"chain": twocycle_path})
        assert code == 0
        assert "nu_qs" in doc
        assert "spectral" in doc["sections"]

    def test_unknown_command_raises(self, twocycle_path):
        from qsdlab.errors import UnknownCommand

        with pytest.raises(UnknownCommand):
            run("frobnicate", {"chain": twocycle_path})
