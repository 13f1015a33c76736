"""Render the TSV decay curves to PNG files.

Each curve file (columns n, j, value) becomes one figure with a line
per step residue j, on a log scale when the values span enough decades
to warrant it.  Figures land next to their TSV sources.
"""

from __future__ import annotations

import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

CURVE_LABELS = {
    "limits_decay": ("blocks n", "worst weighted residual"),
    "qprocess_contraction": ("blocks n", "total variation to limit"),
    "ergodic_rate": ("horizon N", "(N+1) x time-average error"),
}


def read_curve(tsv_path: str | os.PathLike) -> dict[int, list[tuple[int, float]]]:
    """Parse a (n, j, value) TSV back into per-residue series."""
    series: dict[int, list[tuple[int, float]]] = defaultdict(list)
    with open(tsv_path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if header.strip() != "n\tj\tvalue":
            raise ValueError(f"{tsv_path}: unexpected TSV header {header!r}")
        for line in fh:
            n_str, j_str, v_str = line.rstrip("\n").split("\t")
            series[int(j_str)].append((int(n_str), float(v_str)))
    return dict(series)


def render_curve(tsv_path: str | os.PathLike,
                 png_path: str | os.PathLike | None = None) -> str:
    """Plot one curve file; returns the figure path."""
    tsv_path = os.fspath(tsv_path)
    if png_path is None:
        png_path = os.path.splitext(tsv_path)[0] + ".png"
    name = os.path.splitext(os.path.basename(tsv_path))[0]
    xlabel, ylabel = CURVE_LABELS.get(name, ("n", "value"))
    series = read_curve(tsv_path)

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    positive = []
    for j in sorted(series):
        pts = series[j]
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        positive.extend(y for y in ys if y > 0.0)
        label = f"j = {j}" if len(series) > 1 else None
        ax.plot(xs, ys, marker=".", markersize=3, linewidth=1.0, label=label)
    if positive and max(positive) / max(min(positive), 1e-300) > 1e3:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(name.replace("_", " "))
    if len(series) > 1:
        ax.legend(frameon=False, fontsize=8)
    ax.grid(True, which="both", alpha=0.25)
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return os.fspath(png_path)


def render_all(tsv_dir: str | os.PathLike) -> list[str]:
    """Render every curve file in a directory; returns the figure paths."""
    out = []
    for entry in sorted(os.listdir(tsv_dir)):
        if entry.endswith(".tsv"):
            out.append(render_curve(os.path.join(tsv_dir, entry)))
    return out
