"""Static SVG line charts for regret curves and sweeps."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

logger = logging.getLogger(__name__)

SERIES_PREFIX = "series-"

# Fixed salt and no date keep repeated renders byte-identical.
plt.rcParams["svg.hashsalt"] = "mtcool"


def render_error_lines(
    path: Path,
    series: Mapping[str, tuple[Sequence[float], Sequence[float], Sequence[float]]],
    xlabel: str,
    ylabel: str,
    title: str,
    log_x: bool = False,
) -> Path:
    """One polyline per series with standard-error whiskers."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for name, (x, y, err) in series.items():
        container = ax.errorbar(x, y, yerr=err, marker="o", markersize=3, capsize=3, label=name)
        container.lines[0].set_gid(SERIES_PREFIX + name)
    if log_x:
        ax.set_xscale("log")
    return _finish(fig, ax, path, xlabel, ylabel, title)


def render_band_lines(
    path: Path,
    series: Mapping[str, tuple[Sequence[float], Sequence[float], Sequence[float]]],
    xlabel: str,
    ylabel: str,
    title: str,
) -> Path:
    """One polyline per series with a shaded +-1 SE band."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for name, (x, y, err) in series.items():
        (line,) = ax.plot(x, y, label=name)
        line.set_gid(SERIES_PREFIX + name)
        lower = [a - b for a, b in zip(y, err)]
        upper = [a + b for a, b in zip(y, err)]
        ax.fill_between(x, lower, upper, color=line.get_color(), alpha=0.2, linewidth=0)
    return _finish(fig, ax, path, xlabel, ylabel, title)


def _finish(fig, ax, path: Path, xlabel: str, ylabel: str, title: str) -> Path:
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.info("Wrote %s", path)
    return path
