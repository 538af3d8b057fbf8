"""Tests for the validation script (scripts/validate_config.py)."""

import sys
from pathlib import Path

# Add project root so we can import the validation module
sys.path.insert(0, str(Path(__file__).parent.parent))

from scripts.validate_config import validate_env, validate_run_file  # noqa: E402


class TestValidateRunFile:
    def test_missing_file(self, tmp_path, capsys):
        errors, warnings = validate_run_file(str(tmp_path / "nonexistent.yaml"))
        assert len(errors) == 1
        assert "not found" in errors[0].lower()

    def test_valid_config(self, tmp_path, capsys):
        config_file = tmp_path / "run.yaml"
        config_file.write_text(
            """
command: spectrum
profile:
  kind: Uniform
  params: [1.0]
"""
        )
        errors, warnings = validate_run_file(str(config_file))
        assert errors == []
        assert warnings == []
        assert "Parses as 'spectrum'" in capsys.readouterr().out

    def test_error_reports_position(self, tmp_path, capsys):
        config_file = tmp_path / "run.yaml"
        config_file.write_text("command: spectrum\nprofile:\n  kind: Uniform\n  param: [1.0]\n")
        errors, _ = validate_run_file(str(config_file))
        assert len(errors) == 1
        assert "line 4, column 3" in errors[0]

    def test_tolerance_override_warns(self, tmp_path, capsys):
        config_file = tmp_path / "run.yaml"
        config_file.write_text(
            "command: spectrum\nprofile: {kind: Uniform, params: [1.0]}\ntolerances: {heat_slack: 0.2}\n"
        )
        errors, warnings = validate_run_file(str(config_file))
        assert errors == []
        assert len(warnings) == 1

    def test_empty_report(self, tmp_path, capsys):
        config_file = tmp_path / "run.yaml"
        config_file.write_text("command: report\n")
        errors, _ = validate_run_file(str(config_file))
        assert errors == [f"{config_file}: report lists no records"]


class TestValidateEnv:
    def test_missing_env_file(self, tmp_path, capsys):
        assert validate_env(str(tmp_path / ".env")) == []
        assert "defaults apply" in capsys.readouterr().out

    def test_unknown_setting(self, tmp_path, capsys):
        env_file = tmp_path / ".env"
        env_file.write_text("WORKBENCH_WORKERS=4\nWORKBENCH_COLOUR=red\n")
        warnings = validate_env(str(env_file))
        assert warnings == ["Unknown setting WORKBENCH_COLOUR"]
        assert "WORKBENCH_WORKERS = 4" in capsys.readouterr().out
