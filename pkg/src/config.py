"""Environment variable loading and numerical tolerances."""

import logging
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

from dotenv import load_dotenv

from src.errors import ConfigError

load_dotenv()

logger = logging.getLogger(__name__)

VERSION = "0.4.0"

# Eigendecomposition cache (plain-text files, see src/cache.py)
CACHE_DIR: Path = Path(os.environ.get("WORKBENCH_CACHE_DIR", ".cache/eigen"))

# Sweep workers for the CLI thread pool (1 = run inline)
try:
    WORKERS: int = max(1, int(os.environ.get("WORKBENCH_WORKERS", "1")))
except ValueError:
    logger.warning("WORKBENCH_WORKERS is not an integer; running single-threaded")
    WORKERS = 1

LOG_LEVEL: str = os.environ.get("WORKBENCH_LOG_LEVEL", "INFO").upper()

# Above this dimension the eigensolver switches from dense to shift-invert Lanczos
try:
    DENSE_LIMIT: int = int(os.environ.get("WORKBENCH_DENSE_LIMIT", "8192"))
except ValueError:
    logger.warning("WORKBENCH_DENSE_LIMIT is not an integer; using 8192")
    DENSE_LIMIT = 8192


@dataclass(frozen=True)
class Tolerances:
    """Every numerical threshold the audits and classifiers use.

    Defaults are the documented values; run configurations override them by
    field name through ``with_overrides``.
    """

    heat_slack: float = 0.05
    noise_floor: float = 1e-10
    cluster_factor: float = 5.0
    stability_tol: float = 0.05
    symmetry_tol: float = 1e-12
    residual_tol: float = 1e-8
    opnorm_rtol: float = 1e-6
    theta_fail: float = 1.0
    envelope_v: float = 8.0
    envelope_u: float = 2.0
    hausdorff_factor: float = 3.0
    coefficient_ceiling: float = 10.0
    isometry_tol: float = 1e-4
    equivalence_rtol: float = 0.01
    kernel_margin: float = 2.0

    def with_overrides(self, overrides: dict | None) -> "Tolerances":
        if not overrides:
            return self
        known = {f.name for f in fields(self)}
        changes = {}
        for key, value in overrides.items():
            if key not in known:
                raise ConfigError(f"Unknown tolerance '{key}'", key=f"tolerances.{key}")
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"Tolerance '{key}' must be a number", key=f"tolerances.{key}")
            if value <= 0:
                raise ConfigError(f"Tolerance '{key}' must be positive, got {value}", key=f"tolerances.{key}")
            changes[key] = float(value)
        return replace(self, **changes)

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


DEFAULT_TOLERANCES = Tolerances()
