"""Matplotlib defaults and byte-stable SVG output for report figures."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 10,
    "axes.titlesize": 11,
    "axes.labelsize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "lines.linewidth": 1.4,
    "svg.fonttype": "path",
    "svg.hashsalt": "augddpg-report",
}


def pretty_plot(width=7.0, height=None):
    golden = (5 ** 0.5 - 1) / 2
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(width, height or width * golden))
    return fig, ax


def save_svg(fig, path):
    """Write a self-contained SVG; the date stamp is dropped so reruns match byte for byte."""
    with plt.rc_context(STYLE):
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def line_plot(series, path, title, ylabel, xlabel="trading day"):
    """``series`` maps a label to (x, y); one line per label in sorted order."""
    fig, ax = pretty_plot()
    with plt.rc_context(STYLE):
        for label in sorted(series):
            x, y = series[label]
            ax.plot(x, y, label=label)
        ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if series:
            ax.legend(loc="best")
    save_svg(fig, path)
