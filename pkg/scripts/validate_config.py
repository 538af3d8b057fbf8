#!/usr/bin/env python3
"""Run-configuration validation script.

Parses one or more run files with the workbench's strict loader, checks the
environment settings, and reports whether each run is ready.

Usage:
    python scripts/validate_config.py config/*.yaml [--env-file .env]
"""

import argparse
import sys
from pathlib import Path

# Add project root to path so we can import src modules
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.commands import COMMAND_REGISTRY  # noqa: E402
from src.config import DEFAULT_TOLERANCES  # noqa: E402
from src.errors import ConfigError  # noqa: E402
from src.run_config import parse_config  # noqa: E402

ENV_VARS = {
    "WORKBENCH_CACHE_DIR": "cache directory (default .cache/eigen)",
    "WORKBENCH_WORKERS": "sweep worker threads (default 1)",
    "WORKBENCH_LOG_LEVEL": "log level (default INFO)",
    "WORKBENCH_DENSE_LIMIT": "dense/Lanczos switch (default 8192)",
}


def validate_run_file(config_path: str) -> tuple[list[str], list[str]]:
    """Validate one run file. Returns (errors, warnings)."""
    errors = []
    warnings = []
    path = Path(config_path)

    print(f"\nRun config: {config_path}")

    if not path.exists():
        errors.append(f"File not found: {config_path}")
        print(f"  \u2717 ERROR: File not found: {config_path}")
        return errors, warnings

    try:
        config = parse_config(path.read_text(encoding="utf-8"), source=path)
    except ConfigError as e:
        where = f" (line {e.line}, column {e.column})" if e.line is not None else ""
        errors.append(f"{e}{where}")
        print(f"  \u2717 ERROR: {e}{where}")
        return errors, warnings
    except Exception as e:
        errors.append(f"{type(e).__name__}: {e}")
        print(f"  \u2717 ERROR: {type(e).__name__}: {e}")
        return errors, warnings

    command = COMMAND_REGISTRY[config.command]
    print(f"  \u2713 Parses as '{config.command}': {command.description}")
    if config.profile is not None:
        print(f"  \u2713 Profile: {config.profile.label}")
    print(f"  \u2713 Inputs digest: {config.digest[:16]}")

    changed = {k: v for k, v in config.tolerances.as_dict().items() if v != getattr(DEFAULT_TOLERANCES, k)}
    for key, value in sorted(changed.items()):
        print(f"  \u26a0 Tolerance override: {key} = {value:g} (default {getattr(DEFAULT_TOLERANCES, key):g})")
        warnings.append(f"{config_path}: tolerance {key} overridden")

    if config.command == "report" and not config.parameters["records"]:
        errors.append(f"{config_path}: report lists no records")
        print("  \u2717 ERROR: parameters.records is empty")
    if not config.cache_enabled:
        print("  \u26a0 Cache disabled")
    return errors, warnings


def validate_env(env_file: str) -> list[str]:
    """Report which workbench settings the .env file sets. Returns warnings."""
    warnings = []
    path = Path(env_file)
    print(f"\nEnvironment: {env_file}")
    if not path.exists():
        print("  \u26a0 No .env file; defaults apply")
        return warnings
    from dotenv import dotenv_values

    values = dotenv_values(path)
    for name, meaning in ENV_VARS.items():
        if values.get(name):
            print(f"  \u2713 {name} = {values[name]} ({meaning})")
        else:
            print(f"  - {name} not set ({meaning})")
    unknown = sorted(k for k in values if k.startswith("WORKBENCH_") and k not in ENV_VARS)
    for name in unknown:
        warnings.append(f"Unknown setting {name}")
        print(f"  \u26a0 Unknown setting {name}")
    return warnings


def main():
    parser = argparse.ArgumentParser(description="Validate workbench run configurations")
    parser.add_argument("configs", nargs="+", help="Run configuration files")
    parser.add_argument("--env-file", default=".env", help="Path to .env file (default: .env)")
    args = parser.parse_args()

    print("=== Workbench Config Validation ===")

    all_errors, all_warnings = [], []
    for config_path in args.configs:
        errors, warnings = validate_run_file(config_path)
        all_errors.extend(errors)
        all_warnings.extend(warnings)
    all_warnings.extend(validate_env(args.env_file))

    print(f"\nSummary: {'ALL VALID' if not all_errors else 'INVALID'}")
    if all_errors:
        print(f"  Required: {len(all_errors)} error(s) found")
    else:
        print(f"  Required: all {len(args.configs)} file(s) valid")
    if all_warnings:
        print(f"  Warnings: {len(all_warnings)}")

    sys.exit(1 if all_errors else 0)


if __name__ == "__main__":
    main()
