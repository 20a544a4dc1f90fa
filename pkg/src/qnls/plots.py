"""Static SVG figures written after a run (matplotlib, Agg backend)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed ids and no timestamp, so identical data gives identical files
plt.rcParams["svg.hashsalt"] = "qnls"
_META = {"Date": None, "Creator": "qnls"}


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def line_plot(path, x, ys: dict[str, Sequence[float]], *, xlabel: str, ylabel: str,
              logx: bool = False, logy: bool = False, title: str | None = None) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, y in ys.items():
        ax.plot(x, y, label=label)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(ys) > 1:
        ax.legend()
    fig.tight_layout()
    _save(fig, Path(path))


def phase_plot(path, xs, ys, statuses, *, xlabel: str, ylabel: str) -> None:
    """Scatter of sweep points coloured by final run status."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for status in sorted(set(statuses)):
        sel = [i for i, s in enumerate(statuses) if s == status]
        ax.scatter([xs[i] for i in sel], [ys[i] for i in sel], label=status)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    _save(fig, Path(path))
