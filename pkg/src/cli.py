"""Command-line entry point: run one analysis from a run configuration.

Usage:
    python -m src.cli <command> --config <path> [--out <dir>] [--seed <int>] [--no-cache]

Exit codes: 0 pass, 1 check failure, 2 usage/config error, 3 numerical failure.
"""

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from src.cache import EigenCache
from src.commands import COMMAND_REGISTRY, RunContext, command_names
from src.config import LOG_LEVEL, VERSION, WORKERS
from src.errors import (
    ArgumentError,
    ConfigError,
    ExitCategory,
    VersionMismatchError,
    classify_exception,
    format_error_message,
)
from src.export import write_csv
from src.run_config import RunConfig, load_run_config

logger = logging.getLogger(__name__)

RECORD_FILE = "record.json"
SUMMARY_FILE = "summary.txt"


def configure_logging(level: str = LOG_LEVEL) -> None:
    # No-op if the root logger already has handlers (pytest, embedding callers)
    root = logging.getLogger()
    root.setLevel(getattr(logging, level, logging.INFO))
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        root.addHandler(handler)


# ---------------------------------------------------------------------------
# Result records
# ---------------------------------------------------------------------------


@dataclass
class ResultRecord:
    command: str
    inputs_digest: str
    csv_paths: list[str] = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    checks: dict[str, bool] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)
    wall_time: float = 0.0
    version: str = VERSION
    seed: int = 0
    directory: str = ""

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=_json_default) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ResultRecord":
        data = json.loads(text)
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.bool_):
        return bool(value)
    return str(value)


def write_record(directory: Path, record: ResultRecord) -> Path:
    """Write record.json atomically (write .tmp then rename)."""
    path = directory / RECORD_FILE
    tmp = path.with_suffix(".tmp")
    tmp.write_text(record.to_json(), encoding="utf-8")
    tmp.replace(path)
    return path


def load_record(path: Path | str) -> ResultRecord:
    """Read a record from a run directory or a record.json path."""
    path = Path(path)
    if path.is_dir():
        path = path / RECORD_FILE
    if not path.exists():
        raise FileNotFoundError(f"No result record at {path}")
    record = ResultRecord.from_json(path.read_text(encoding="utf-8"))
    record.directory = str(path.parent)
    return record


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


@contextmanager
def _worker_map(workers: int):
    if workers <= 1:
        yield map
        return
    # Executor.map keeps input order, so outputs stay deterministic
    with ThreadPoolExecutor(max_workers=workers) as pool:
        yield pool.map


def _prepare_output(directory: Path) -> None:
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"Cannot create output directory {directory}: {e}", key="output.dir") from None
    if not os.access(directory, os.W_OK):
        raise ConfigError(f"Output directory {directory} is not writable", key="output.dir")


def run(config: RunConfig, *, workers: int = WORKERS) -> ResultRecord:
    """Dispatch ``config`` to its pipeline and persist every output.

    On failure every file this run wrote is removed before the exception
    propagates.
    """
    command = COMMAND_REGISTRY[config.command]
    if command.runner is None:
        raise ArgumentError(f"'{config.command}' aggregates records; use report()")
    out_dir = config.output_dir
    _prepare_output(out_dir)
    cache = EigenCache(config.cache_dir, enabled=config.cache_enabled)
    logger.info("Running %s (inputs %s) into %s", config.command, config.digest[:12], out_dir)

    started = time.perf_counter()
    written: list[Path] = []
    try:
        with _worker_map(workers) as mapper:
            ctx = RunContext(config, cache, np.random.default_rng(config.seed), mapper)
            outcome = command.runner(ctx)
        csv_paths = []
        for name, (columns, rows) in outcome.tables.items():
            written.append(write_csv(out_dir / name, columns, rows))
            csv_paths.append(name)
        for name, text in outcome.texts.items():
            path = out_dir / name
            tmp = path.with_suffix(path.suffix + ".tmp")
            tmp.write_text(text, encoding="utf-8")
            tmp.replace(path)
            written.append(path)
        for name, writer in outcome.files.items():
            written.append(writer(out_dir / name))
        if config.plots:
            for name, plot in outcome.plots.items():
                written.append(plot(out_dir / name))
        record = ResultRecord(
            command=config.command,
            inputs_digest=config.digest,
            csv_paths=csv_paths,
            verdicts=outcome.verdicts,
            checks=outcome.checks,
            failures=outcome.failures,
            wall_time=time.perf_counter() - started,
            seed=config.seed,
            directory=str(out_dir),
        )
        written.append(write_record(out_dir, record))
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        for tmp in out_dir.glob("*.tmp"):
            tmp.unlink(missing_ok=True)
        if out_dir.exists() and not any(out_dir.iterdir()):
            out_dir.rmdir()
        raise
    logger.info(
        "%s finished in %.2fs: %d/%d checks passed (cache %d hit(s), %d miss(es))",
        config.command,
        record.wall_time,
        sum(record.checks.values()),
        len(record.checks),
        cache.hits,
        cache.misses,
    )
    return record


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


@dataclass
class ReportSummary:
    text: str
    passed: bool


def _series(version: str) -> tuple[str, ...]:
    return tuple(version.split(".")[:2])


def report(records: list[ResultRecord]) -> ReportSummary:
    """Aggregate records into one plain-text summary.

    Records must share the running workbench's major.minor version.
    """
    if not records:
        raise ArgumentError("report needs at least one result record (set parameters.records)")
    mismatched = [r for r in records if _series(r.version) != _series(VERSION)]
    if mismatched:
        found = sorted({r.version for r in mismatched})
        raise VersionMismatchError(f"records from version(s) {', '.join(found)} cannot be combined with {VERSION}")

    lines = [f"Workbench report (version {VERSION})", ""]
    total = passed = 0
    for record in records:
        status = "PASS" if record.passed else "FAIL"
        where = f" [{record.directory}]" if record.directory else ""
        lines.append(f"{record.command} {record.inputs_digest[:12]} {status} ({record.wall_time:.2f}s){where}")
        for key in sorted(record.verdicts):
            lines.append(f"  {key}: {record.verdicts[key]}")
        for name, ok in sorted(record.checks.items()):
            total += 1
            passed += int(ok)
            if ok:
                lines.append(f"  \u2713 {name}")
        for failure in record.failures:
            lines.append(f"  \u2717 {failure}")
    overall = all(r.passed for r in records)
    lines.extend(
        [
            "",
            "Summary:",
            f"  records: {len(records)}",
            f"  checks passed: {passed}/{total}",
            f"  result: {'PASS' if overall else 'FAIL'}",
        ]
    )
    return ReportSummary("\n".join(lines) + "\n", overall)


def run_report(config: RunConfig) -> ReportSummary:
    base = config.source.parent if config.source is not None else Path.cwd()
    records = []
    for entry in config.parameters["records"]:
        path = Path(entry)
        records.append(load_record(path if path.is_absolute() or path.exists() else base / path))
    summary = report(records)
    _prepare_output(config.output_dir)
    path = config.output_dir / SUMMARY_FILE
    tmp = path.with_suffix(".tmp")
    tmp.write_text(summary.text, encoding="utf-8")
    tmp.replace(path)
    return summary


# ---------------------------------------------------------------------------
# main
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="workbench", description="Numerical workbench for divergence-form elliptic operators"
    )
    parser.add_argument("command", choices=command_names(), help="Analysis to run")
    parser.add_argument("--config", required=True, help="Path to a YAML run configuration")
    parser.add_argument("--out", default=None, help="Output directory (overrides output.dir)")
    parser.add_argument("--seed", type=int, default=None, help="Random seed (overrides seed)")
    parser.add_argument("--no-cache", action="store_true", help="Disable the eigendecomposition cache")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging()
    try:
        config = load_run_config(args.config)
        if config.command != args.command:
            raise ConfigError(f"config is for '{config.command}', not '{args.command}'", key="command")
        config = config.with_overrides(
            output_dir=args.out, seed=args.seed, cache_enabled=False if args.no_cache else None
        )
        if args.command == "report":
            summary = run_report(config)
            print(summary.text, end="")
            return ExitCategory.PASS.value if summary.passed else ExitCategory.CHECK_FAILURE.value
        record = run(config)
    except Exception as e:
        category = classify_exception(e)
        logger.debug("%s failed", args.command, exc_info=True)
        print(format_error_message(args.command, e, category), file=sys.stderr)
        return category.value

    print(f"{record.command}: {'PASS' if record.passed else 'FAIL'} -> {record.directory}")
    for failure in record.failures:
        print(f"  \u2717 {failure}")
    return ExitCategory.PASS.value if record.passed else ExitCategory.CHECK_FAILURE.value


if __name__ == "__main__":
    sys.exit(main())
