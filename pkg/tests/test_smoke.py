"""Smoke test: the CLI imports and every command is wired to a pipeline."""

from src.cli import build_parser
from src.commands import COMMAND_REGISTRY


def test_parser_knows_every_command():
    parser = build_parser()
    for name in COMMAND_REGISTRY:
        args = parser.parse_args([name, "--config", "run.yaml"])
        assert args.command == name


def test_every_analysis_has_a_runner():
    missing = [name for name, cmd in COMMAND_REGISTRY.items() if cmd.runner is None]
    assert missing == ["report"]
