"""
Plot Module

Standalone SVG figures for run artifacts: line plots of curves, histograms
of samples and heatmaps of lattice fields.

Figures are built with the object-oriented matplotlib API (no pyplot state),
and saved with a fixed hash salt and no date so that identical input gives
identical bytes.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import numpy as np  # noqa: E402
from matplotlib import rc_context  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

logger = logging.getLogger(__name__)

KINDS = ("line", "histogram", "heatmap")
HASH_SALT = "dgff-lab"


@dataclass
class PlotSeries:
    """
    Data and labels of one plotted series.

    ``x``/``y`` feed line plots, ``values`` histograms and ``grid`` heatmaps
    (rows are y, NaN marks cells off the lattice).
    """

    label: str = ""
    x: Sequence[float] = ()
    y: Sequence[float] = ()
    values: Sequence[float] = ()
    grid: Optional[np.ndarray] = None
    xlabel: str = ""
    ylabel: str = ""
    title: str = ""
    errors: Sequence[float] = field(default_factory=tuple)

    def is_empty(self, kind: str) -> bool:
        if kind == "line":
            return len(self.x) == 0 or len(self.y) == 0
        if kind == "histogram":
            return len(self.values) == 0
        return self.grid is None or np.asarray(self.grid).size == 0


def _as_list(series: Union[PlotSeries, Sequence[PlotSeries]]) -> List[PlotSeries]:
    if isinstance(series, PlotSeries):
        return [series]
    return list(series)


def build_figure(series: Union[PlotSeries, Sequence[PlotSeries]], kind: str) -> Figure:
    """
    Build a figure for one or more series.

    Args:
        series: A series, or several for overlaid line plots.
        kind: ``line``, ``histogram`` or ``heatmap``.

    Returns:
        Figure: The figure, not yet saved.

    Raises:
        ValueError: For an unknown kind, no series or an empty series.
    """
    if kind not in KINDS:
        raise ValueError(f"Unknown plot kind: {kind}. Available kinds: {', '.join(KINDS)}")
    items = _as_list(series)
    if not items or any(s.is_empty(kind) for s in items):
        raise ValueError(f"Cannot plot an empty series ({kind})")

    fig = Figure(figsize=(6.0, 4.0))
    ax = fig.add_subplot(1, 1, 1)
    first = items[0]
    if kind == "line":
        for s in items:
            if len(s.x) != len(s.y):
                raise ValueError(f"Series {s.label!r} has {len(s.x)} x values but {len(s.y)} y values")
            ax.plot(np.asarray(s.x, dtype=float), np.asarray(s.y, dtype=float), marker="o", label=s.label or None)
            if len(s.errors) == len(s.x):
                ax.fill_between(
                    np.asarray(s.x, dtype=float),
                    np.asarray(s.y, dtype=float) - np.asarray(s.errors, dtype=float),
                    np.asarray(s.y, dtype=float) + np.asarray(s.errors, dtype=float),
                    alpha=0.2,
                )
        if any(s.label for s in items):
            ax.legend()
    elif kind == "histogram":
        for s in items:
            values = np.asarray(s.values, dtype=float)
            bins = int(min(50, max(1, np.sqrt(values.size))))
            ax.hist(values, bins=bins, alpha=0.6 if len(items) > 1 else 1.0, label=s.label or None)
        if len(items) > 1:
            ax.legend()
    else:
        grid = np.ma.masked_invalid(np.asarray(first.grid, dtype=float))
        mesh = ax.pcolormesh(grid, cmap="viridis")
        ax.set_aspect("equal")
        fig.colorbar(mesh, ax=ax, label=first.label)
    ax.set_xlabel(first.xlabel)
    ax.set_ylabel(first.ylabel)
    if first.title:
        ax.set_title(first.title)
    return fig


def emit_plot(
    series: Union[PlotSeries, Sequence[PlotSeries]], kind: str, path: Union[str, Path]
) -> Path:
    """
    Write a standalone SVG.

    Raises:
        ValueError: For an unknown kind or an empty series.
        RuntimeError: If the file cannot be written.
    """
    fig = build_figure(series, kind)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with rc_context({"svg.hashsalt": HASH_SALT, "svg.fonttype": "path"}):
            fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as e:
        logger.error(f"Failed to write plot {path}: {e}")
        raise RuntimeError(f"Failed to write plot {path}: {e}") from e
    logger.debug(f"Wrote {kind} plot {path}")
    return path
