"""Figure rendering for sweep reports.

Renders the sweep's headline curves (Recall@1, noisy/topline ratio, NMI
against noise rate, one line per method) as PNG files next to the CSV
output. Purely a view over the emitted cells: the CSV stays the canonical
record and figures can be regenerated from it at any time.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render_figures"]


def _series(cells, attr):
    """mean +/- se of an attribute per (method, p), ordered by p."""
    grouped: dict = {}
    for c in cells:
        value = getattr(c, attr)
        if value is None:
            continue
        grouped.setdefault(c.method, {}).setdefault(c.p, []).append(value)
    out = {}
    for method, by_p in grouped.items():
        ps = sorted(by_p)
        means = np.array([np.mean(by_p[p]) for p in ps])
        ses = np.array(
            [
                np.std(by_p[p], ddof=1) / np.sqrt(len(by_p[p])) if len(by_p[p]) > 1 else 0.0
                for p in ps
            ]
        )
        out[method] = (np.array(ps), means, ses)
    return out


def _plot_metric(cells, attr, ylabel, path, guide=None):
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    for method, (ps, means, ses) in sorted(_series(cells, attr).items()):
        ax.errorbar(ps, means, yerr=ses, marker="o", capsize=3, label=method)
    if guide is not None:
        ax.axhline(guide, color="grey", linestyle=":", linewidth=1)
    ax.set_xlabel("noise rate p")
    ax.set_ylabel(ylabel)
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)
    ax.legend(fontsize=8, frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_figures(cells, out_dir: str | Path) -> list[Path]:
    """Write recall, ratio, and NMI curves; returns the created paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    if not cells:
        return paths
    for attr, ylabel, name, guide in (
        ("rec1", "Recall@1", "recall_at_1.png", None),
        ("ratio", "Recall@1 ratio (noisy / topline)", "recall_ratio.png", 0.9),
        ("nmi", "NMI", "nmi.png", None),
    ):
        path = out / name
        _plot_metric(cells, attr, ylabel, path, guide)
        paths.append(path)
    return paths
