"""Run configuration loader: reads a YAML run file into a validated RunConfig.

Parsing is strict. Unknown keys anywhere are errors naming the key, and every
error carries the line and column of the offending entry when the document
locates it.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

import yaml

from src.coefficients import CoefficientProfile, profile_from_spec
from src.commands import COMMAND_REGISTRY, Command, Param
from src.config import DEFAULT_TOLERANCES, Tolerances
from src.discretize import grid_from_spec
from src.errors import ConfigError
from src.graphmanifold import GRAPH_KEYS

logger = logging.getLogger(__name__)

TOP_LEVEL_KEYS = {"command", "profile", "grid", "parameters", "tolerances", "output", "cache", "seed"}
OUTPUT_KEYS = {"dir", "plots"}
CACHE_KEYS = {"enabled", "dir"}


@dataclass(frozen=True)
class RunConfig:
    """A validated run configuration with every default filled in.

    ``inputs`` is the canonical mapping the digest is computed from; output
    location and cache policy are excluded so they never change it.
    """

    command: str
    profile: CoefficientProfile | None
    profile_spec: dict | None
    grid_spec: dict | None
    parameters: dict
    tolerances: Tolerances
    output_dir: Path
    plots: bool
    cache_enabled: bool
    cache_dir: Path | None
    seed: int
    inputs: dict
    source: Path | None = None

    @property
    def digest(self) -> str:
        return inputs_digest(self.inputs)

    def with_overrides(
        self, *, output_dir: Path | str | None = None, seed: int | None = None, cache_enabled: bool | None = None
    ) -> "RunConfig":
        """Apply command-line overrides (--out, --seed, --no-cache)."""
        changes = {}
        if output_dir is not None:
            changes["output_dir"] = Path(output_dir)
        if seed is not None:
            changes["seed"] = int(seed)
            changes["inputs"] = {**self.inputs, "seed": int(seed)}
        if cache_enabled is not None:
            changes["cache_enabled"] = cache_enabled
        return replace(self, **changes) if changes else self


def inputs_digest(inputs: dict) -> str:
    """SHA-256 of the canonical JSON form; independent of key order."""
    canonical = json.dumps(inputs, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Key positions (for error messages)
# ---------------------------------------------------------------------------


def _key_positions(text: str) -> dict[str, tuple[int, int]]:
    """Map dotted key paths (``profile.limits[0].kind``) to 1-based (line, column)."""
    positions: dict[str, tuple[int, int]] = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return positions

    def walk(node, prefix: str) -> None:
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                path = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
                positions[path] = (key_node.start_mark.line + 1, key_node.start_mark.column + 1)
                walk(value_node, path)
        elif isinstance(node, yaml.SequenceNode):
            for i, item in enumerate(node.value):
                path = f"{prefix}[{i}]"
                positions[path] = (item.start_mark.line + 1, item.start_mark.column + 1)
                walk(item, path)

    if root is not None:
        walk(root, "")
    return positions


def _locate(error: ConfigError, positions: dict[str, tuple[int, int]]) -> ConfigError:
    if error.line is not None or not error.key:
        return error
    key = error.key
    while key:
        if key in positions:
            error.line, error.column = positions[key]
            break
        key = key.rsplit(".", 1)[0] if "." in key else ""
    return error


# ---------------------------------------------------------------------------
# Section validation
# ---------------------------------------------------------------------------


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _check_param(param: Param, value) -> object:
    path = f"parameters.{param.name}"
    if param.choices:
        if value not in param.choices:
            valid = ", ".join(repr(c) for c in param.choices)
            raise ConfigError(f"'{path}' must be one of: {valid}", key=path)
        return value
    kind = param.kind
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"'{path}' must be true or false", key=path)
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"'{path}' must be an integer", key=path)
        return value
    if kind == "float":
        if not _is_number(value):
            raise ConfigError(f"'{path}' must be a number", key=path)
        return float(value)
    if kind == "optional_float":
        if value is None:
            return None
        if not _is_number(value):
            raise ConfigError(f"'{path}' must be a number or null", key=path)
        return float(value)
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"'{path}' must be a string", key=path)
        return value
    if not isinstance(value, list):
        raise ConfigError(f"'{path}' must be a list", key=path)
    if kind == "ints":
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"'{path}' must be a list of integers", key=path)
        return list(value)
    if kind == "floats":
        if not all(_is_number(v) for v in value):
            raise ConfigError(f"'{path}' must be a list of numbers", key=path)
        return [float(v) for v in value]
    if kind == "strs":
        if not all(isinstance(v, str) for v in value):
            raise ConfigError(f"'{path}' must be a list of strings", key=path)
        return list(value)
    raise ConfigError(f"'{path}' has unknown parameter kind '{kind}'", key=path)


def _validate_parameters(command: Command, raw) -> dict:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("'parameters' must be a mapping", key="parameters")
    params = command.defaults()
    for key, value in raw.items():
        param = command.param(key)
        if param is None:
            raise ConfigError(f"Unknown parameter '{key}' for command '{command.name}'", key=f"parameters.{key}")
        params[key] = _check_param(param, value)
    return params


def _validate_section_keys(raw, name: str, allowed: set[str]) -> dict:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"'{name}' must be a mapping", key=name)
    unknown = set(raw) - allowed
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"Unknown key '{key}' in {name}", key=f"{name}.{key}")
    return raw


def _validate_config(raw: dict) -> RunConfig:
    """Validate a parsed document and fill defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("A run configuration must be a mapping of sections")
    unknown = set(raw) - TOP_LEVEL_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"Unknown key '{key}'", key=key)

    name = raw.get("command")
    if not name:
        raise ConfigError("'command' is required", key="command")
    command = COMMAND_REGISTRY.get(name)
    if command is None:
        valid = ", ".join(COMMAND_REGISTRY)
        raise ConfigError(f"'command' must be one of: {valid}", key="command")

    profile, profile_spec = None, raw.get("profile")
    if command.profile == "required":
        if profile_spec is None:
            raise ConfigError(f"'profile' is required for {name}", key="profile")
        profile = profile_from_spec(profile_spec)
    elif profile_spec is not None:
        raise ConfigError(f"'profile' is not used by {name}", key="profile")

    grid_spec = raw.get("grid")
    if grid_spec is None and command.grid in ("required", "graph"):
        raise ConfigError(f"'grid' is required for {name}", key="grid")
    if grid_spec is not None:
        if command.grid == "none":
            raise ConfigError(f"'grid' is not used by {name}", key="grid")
        if command.grid == "graph":
            _validate_section_keys(grid_spec, "grid", GRAPH_KEYS)
        else:
            grid_from_spec(grid_spec)

    parameters = _validate_parameters(command, raw.get("parameters"))
    if name == "asympt" and parameters["infinity_radii"] and grid_spec is None:
        raise ConfigError("'parameters.infinity_radii' needs a 'grid' section", key="parameters.infinity_radii")

    overrides = raw.get("tolerances")
    if overrides is not None and not isinstance(overrides, dict):
        raise ConfigError("'tolerances' must be a mapping", key="tolerances")
    tolerances = DEFAULT_TOLERANCES.with_overrides(overrides)

    output = _validate_section_keys(raw.get("output"), "output", OUTPUT_KEYS)
    out_dir = output.get("dir", f"results/{name}")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError("'output.dir' must be a non-empty path", key="output.dir")
    plots = output.get("plots", True)
    if not isinstance(plots, bool):
        raise ConfigError("'output.plots' must be true or false", key="output.plots")

    cache = _validate_section_keys(raw.get("cache"), "cache", CACHE_KEYS)
    cache_enabled = cache.get("enabled", True)
    if not isinstance(cache_enabled, bool):
        raise ConfigError("'cache.enabled' must be true or false", key="cache.enabled")
    cache_dir = cache.get("dir")
    if cache_dir is not None and not isinstance(cache_dir, str):
        raise ConfigError("'cache.dir' must be a path", key="cache.dir")

    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("'seed' must be a non-negative integer", key="seed")

    inputs = {
        "command": name,
        "profile": profile_spec,
        "grid": grid_spec,
        "parameters": parameters,
        "tolerances": tolerances.as_dict(),
        "seed": seed,
    }
    return RunConfig(
        command=name,
        profile=profile,
        profile_spec=profile_spec,
        grid_spec=grid_spec,
        parameters=parameters,
        tolerances=tolerances,
        output_dir=Path(out_dir),
        plots=plots,
        cache_enabled=cache_enabled,
        cache_dir=Path(cache_dir) if cache_dir else None,
        seed=seed,
        inputs=inputs,
    )


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------


def parse_config(text: str, source: Path | None = None) -> RunConfig:
    """Parse and validate a run configuration document.

    Raises ConfigError with line/column for YAML syntax errors and with the
    offending key for semantic ones.
    """
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        problem = getattr(e, "problem", None) or str(e)
        if mark is not None:
            raise ConfigError(f"YAML syntax error: {problem}", line=mark.line + 1, column=mark.column + 1) from None
        raise ConfigError(f"YAML syntax error: {problem}") from None
    try:
        config = _validate_config(raw if raw is not None else {})
    except ConfigError as e:
        raise _locate(e, _key_positions(text))
    return replace(config, source=source) if source is not None else config


@lru_cache(maxsize=16)
def _load(path: str, mtime_ns: int) -> RunConfig:
    config_path = Path(path)
    logger.info("Loading run config from %s", config_path)
    return parse_config(config_path.read_text(encoding="utf-8"), source=config_path)


def load_run_config(path: Path | str) -> RunConfig:
    """Load a run configuration file.

    Raises FileNotFoundError if the file is missing and ConfigError if it is
    malformed. Results are cached per path and modification time.
    """
    config_path = Path(path)
    if not config_path.exists():
        raise FileNotFoundError(f"Missing run config {config_path}; see config/ for examples.")
    return _load(str(config_path), config_path.stat().st_mtime_ns)
