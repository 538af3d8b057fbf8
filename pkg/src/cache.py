"""Persistent eigendecomposition cache.

Stores eigenvalues and eigenvectors as plain-text tables so cached results
stay readable without numpy's binary formats. Entries are keyed by the
operator digest (which covers the coefficient samples, the grid and the
boundary condition) and the number of requested pairs.

Persistence: $WORKBENCH_CACHE_DIR (default .cache/eigen).
Pattern: in-memory dict + atomic file writes (write .tmp, then rename).
"""

import logging
import threading
from pathlib import Path

import numpy as np

from src.config import CACHE_DIR

logger = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# Constants
# ---------------------------------------------------------------------------

# Round-trip exact for float64
_FORMAT = "%.17g"
MAX_MEMORY_ENTRIES = 16


class EigenCache:
    """Two-level cache: a bounded in-memory dict in front of plain-text files."""

    def __init__(self, directory: Path | str | None = None, enabled: bool = True):
        self.directory = Path(directory) if directory is not None else CACHE_DIR
        self.enabled = enabled
        self.hits = 0
        self.misses = 0
        self._memory: dict[str, tuple[np.ndarray, np.ndarray | None]] = {}
        self._lock = threading.Lock()

    @staticmethod
    def key(digest: str, count: int) -> str:
        return f"{digest}-{count}"

    def _paths(self, key: str) -> tuple[Path, Path]:
        return self.directory / f"{key}.values.txt", self.directory / f"{key}.vectors.txt"

    # -----------------------------------------------------------------------
    # File I/O (atomic writes)
    # -----------------------------------------------------------------------

    def _read(self, key: str) -> tuple[np.ndarray, np.ndarray | None] | None:
        values_path, vectors_path = self._paths(key)
        if not values_path.exists():
            return None
        try:
            values = np.atleast_1d(np.loadtxt(values_path, dtype=float))
            vectors = None
            if vectors_path.exists():
                vectors = np.loadtxt(vectors_path, dtype=float, ndmin=2)
            return values, vectors
        except Exception as e:
            logger.warning("Failed to read cache entry %s: %s; recomputing", key, e)
            return None

    def _write(self, key: str, values: np.ndarray, vectors: np.ndarray | None) -> None:
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
            values_path, vectors_path = self._paths(key)
            pairs = [(values_path, values.reshape(-1, 1))]
            if vectors is not None:
                pairs.append((vectors_path, vectors))
            for path, table in pairs:
                tmp = path.with_suffix(".tmp")
                with tmp.open("w") as fh:
                    np.savetxt(fh, table, fmt=_FORMAT)
                tmp.replace(path)
        except Exception as e:
            logger.error("Failed to save cache entry %s: %s", key, e)

    # -----------------------------------------------------------------------
    # Public API
    # -----------------------------------------------------------------------

    def load(self, key: str) -> tuple[np.ndarray, np.ndarray | None] | None:
        if not self.enabled:
            return None
        with self._lock:
            entry = self._memory.get(key)
        if entry is None:
            entry = self._read(key)
            if entry is not None:
                self._remember(key, entry)
        if entry is None:
            self.misses += 1
        else:
            self.hits += 1
            logger.info("Eigen cache hit: %s", key)
        return entry

    def store(self, key: str, values: np.ndarray, vectors: np.ndarray | None) -> None:
        if not self.enabled:
            return
        self._remember(key, (values, vectors))
        self._write(key, values, vectors)

    def _remember(self, key: str, entry) -> None:
        with self._lock:
            self._memory[key] = entry
            while len(self._memory) > MAX_MEMORY_ENTRIES:
                self._memory.pop(next(iter(self._memory)))

    def clear(self) -> int:
        """Delete every cached file; returns how many were removed."""
        with self._lock:
            self._memory.clear()
        if not self.directory.exists():
            return 0
        removed = 0
        for path in self.directory.glob("*.txt"):
            path.unlink()
            removed += 1
        return removed
