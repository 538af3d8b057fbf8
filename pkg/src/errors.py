"""Workbench exceptions and their mapping onto CLI exit codes.

Every failure a pipeline can raise derives from ``WorkbenchError``. The CLI
classifies exceptions into an ``ExitCategory`` and formats a one-line message;
audits never raise for failed inequalities, they report them as data.
"""

import logging
import warnings
from enum import Enum

import numpy as np
from scipy.sparse.linalg import ArpackError

logger = logging.getLogger(__name__)


class ExitCategory(Enum):
    """Classification of a failure for exit-code routing."""

    PASS = 0
    CHECK_FAILURE = 1
    USAGE = 2
    NUMERICAL = 3


class WorkbenchError(Exception):
    """Base class for all workbench failures."""

    category = ExitCategory.NUMERICAL


class DomainError(WorkbenchError):
    """A point lies outside a profile's domain."""


class DegeneracyError(WorkbenchError):
    """A coefficient vanishes where a strictly positive one is required."""


class UnsupportedError(WorkbenchError):
    """The requested operation is not defined for this input kind."""

    category = ExitCategory.USAGE


class SolverError(WorkbenchError):
    """An iterative solver failed to converge."""

    def __init__(self, message: str, *, iterations: int | None = None, converged: int | None = None):
        super().__init__(message)
        self.iterations = iterations
        self.converged = converged


class SingularityError(WorkbenchError):
    """A grid touches a singular point of a potential."""


class PreconditionError(WorkbenchError):
    """Inputs violate a structural precondition; ``witness`` locates the violation."""

    def __init__(self, message: str, *, witness: dict | None = None):
        super().__init__(message)
        self.witness = witness or {}


class ArgumentError(WorkbenchError):
    """An argument is empty or out of range."""

    category = ExitCategory.USAGE


class RegularizerError(WorkbenchError):
    """No admissible regularizer time exists; ``evidence`` holds the search record."""

    category = ExitCategory.CHECK_FAILURE

    def __init__(self, message: str, *, evidence: dict | None = None):
        super().__init__(message)
        self.evidence = evidence or {}


class AnalyticDerivativeError(WorkbenchError):
    """A profile is not smooth enough for the requested derivatives."""


class ConfigError(WorkbenchError):
    """A run configuration is malformed; ``key`` names the offending entry."""

    category = ExitCategory.USAGE

    def __init__(self, message: str, *, key: str | None = None, line: int | None = None, column: int | None = None):
        super().__init__(message)
        self.key = key
        self.line = line
        self.column = column


class VersionMismatchError(WorkbenchError):
    """Result records come from incompatible workbench versions."""

    category = ExitCategory.USAGE


class ResolutionWarning(UserWarning):
    """A grid is too coarse to resolve a coefficient's oscillation."""


def warn_resolution(message: str) -> None:
    logger.warning(message)
    warnings.warn(message, ResolutionWarning, stacklevel=3)


def classify_exception(exc: BaseException) -> ExitCategory:
    """Map an exception to the exit category the CLI reports."""
    if isinstance(exc, WorkbenchError):
        return exc.category
    # LinAlgError subclasses ValueError in numpy 2.x, so it is matched first
    if isinstance(exc, (np.linalg.LinAlgError, ArpackError)):
        return ExitCategory.NUMERICAL
    # Bad values from the config layer or argparse-level misuse
    if isinstance(exc, (ValueError, KeyError, TypeError, FileNotFoundError)):
        return ExitCategory.USAGE
    return ExitCategory.NUMERICAL


def _reason(exc: BaseException) -> str:
    exc_name = type(exc).__name__
    msg = str(exc)
    if len(msg) > 200:
        msg = msg[:200] + "..."
    return f"{exc_name}: {msg}" if msg else exc_name


def format_error_message(command: str, exc: BaseException, category: ExitCategory) -> str:
    """One-line message for stderr naming the command and the failure."""
    reason = _reason(exc)
    if isinstance(exc, ConfigError):
        where = []
        if exc.key:
            where.append(f"key '{exc.key}'")
        if exc.line is not None:
            where.append(f"line {exc.line}, column {exc.column}")
        suffix = f" ({'; '.join(where)})" if where else ""
        return f"{command}: configuration error{suffix}: {exc}"
    if category == ExitCategory.USAGE:
        return f"{command}: usage error: {reason}"
    if category == ExitCategory.CHECK_FAILURE:
        return f"{command}: check failed: {reason}"
    if isinstance(exc, SolverError) and exc.iterations is not None:
        return f"{command}: numerical failure after {exc.iterations} iterations: {reason}"
    return f"{command}: numerical failure: {reason}"
