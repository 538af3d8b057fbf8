"""CSV tables, SVG plots and operator triplet files.

CSV follows RFC 4180: CRLF line endings, a header row, quoting only where a
field needs it. Numbers use the shortest form that keeps 15 significant
digits, switching to exponent notation for 0 < |v| < 1e-4 so tiny values are
never printed as a run of zeros. Every file is written to a .tmp sibling and
renamed into place.
"""

import csv
import io
import logging
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from src.discretize import DiscreteOperator, to_triplets  # noqa: E402

logger = logging.getLogger(__name__)

# Fixed SVG ids so identical data gives identical files
plt.rcParams["svg.hashsalt"] = "workbench"

_SIGNIFICANT = 15
_EXPONENT_BELOW = 1e-4


# ---------------------------------------------------------------------------
# Value formatting
# ---------------------------------------------------------------------------


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if v == 0.0:
            return "0"
        if abs(v) < _EXPONENT_BELOW:
            return f"{v:.{_SIGNIFICANT - 1}e}"
        return f"{v:.{_SIGNIFICANT}g}"
    return str(value)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    tmp.replace(path)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def csv_text(columns: list[str], rows) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\r\n")
    writer.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"Row has {len(row)} fields, header has {len(columns)}: {row!r}")
        writer.writerow([format_value(v) for v in row])
    return buffer.getvalue()


def write_csv(path: Path | str, columns: list[str], rows) -> Path:
    """Write one table; the header is exactly ``columns``."""
    path = Path(path)
    rows = list(rows)
    _atomic_write(path, csv_text(columns, rows))
    logger.info("Wrote %s (%d rows)", path, len(rows))
    return path


def read_csv(path: Path | str) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        table = list(csv.reader(fh))
    if not table:
        return [], []
    return table[0], table[1:]


# ---------------------------------------------------------------------------
# SVG plots
# ---------------------------------------------------------------------------


def _save_svg(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".svg.tmp")
    fig.savefig(tmp, format="svg", metadata={"Date": None})
    plt.close(fig)
    tmp.replace(path)
    logger.info("Wrote %s", path)
    return path


def plot_series(
    path: Path | str,
    x,
    series: dict[str, list[float]],
    *,
    xlabel: str,
    ylabel: str,
    title: str = "",
    logx: bool = False,
    logy: bool = False,
) -> Path:
    """Norm-vs-parameter line plot, one line per labelled series."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, ys in series.items():
        ax.plot(x, ys, marker="o", label=label)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return _save_svg(fig, Path(path))


def plot_intervals(
    path: Path | str,
    rows: dict[str, list[tuple[float, float]]],
    *,
    xlabel: str = "spectrum",
    title: str = "",
) -> Path:
    """Interval unions drawn as horizontal bars, one row per label."""
    fig, ax = plt.subplots(figsize=(6, 1 + 0.5 * max(1, len(rows))))
    labels = list(rows)
    for i, label in enumerate(labels):
        for lo, hi in rows[label]:
            width = max(hi - lo, 1e-3)
            ax.broken_barh([(lo, width)], (i - 0.3, 0.6))
    ax.set_yticks(range(len(labels)))
    ax.set_yticklabels(labels)
    ax.set_xlabel(xlabel)
    if title:
        ax.set_title(title)
    ax.grid(True, axis="x", alpha=0.3)
    fig.tight_layout()
    return _save_svg(fig, Path(path))


# ---------------------------------------------------------------------------
# Operator triplets
# ---------------------------------------------------------------------------


def write_triplets(path: Path | str, op: DiscreteOperator) -> Path:
    """Plain-text (row, col, value) listing of the nonzeros of ``op``."""
    rows, cols, values = to_triplets(op)
    lines = [f"# {op.profile_tag} n={op.dimension} boundary={op.boundary.value}"]
    lines.extend(f"{int(r)} {int(c)} {float(v):.17g}" for r, c, v in zip(rows, cols, values))
    path = Path(path)
    _atomic_write(path, "\n".join(lines) + "\n")
    logger.info("Wrote %s (%d nonzeros)", path, len(values))
    return path


def read_triplets(path: Path | str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    table = np.loadtxt(path, comments="#", ndmin=2)
    return table[:, 0].astype(int), table[:, 1].astype(int), table[:, 2]
