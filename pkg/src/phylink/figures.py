"""Report figures rendered headlessly to files."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "apply_style",
    "save_figure",
    "plot_degree_distributions",
    "plot_matrix",
    "plot_murphy",
    "plot_roc",
    "plot_top_x",
    "plot_trace",
]

_STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 110,
    "savefig.dpi": 200,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "grid.linewidth": 0.6,
    "font.size": 10,
    "legend.frameon": False,
}


def apply_style() -> None:
    plt.rcParams.update(_STYLE)


def save_figure(fig, path) -> str:
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return str(path)


def plot_degree_distributions(host_degrees: dict, parasite_degrees: dict):
    """Log-log degree histograms for both sides of the network."""
    apply_style()
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6))
    for ax, counts, title in ((axes[0], host_degrees, "hosts"),
                              (axes[1], parasite_degrees, "parasites")):
        if counts:
            deg = np.array(sorted(counts))
            num = np.array([counts[d] for d in deg], dtype=np.float64)
            ax.loglog(deg, num, "o", markersize=4)
        ax.set_xlabel("degree")
        ax.set_ylabel("count")
        ax.set_title(title)
    fig.tight_layout()
    return fig


def plot_matrix(values, title: str = "", ax=None):
    """Binary or probability matrix as an image, hosts on rows."""
    apply_style()
    if ax is None:
        fig, ax = plt.subplots(figsize=(7.0, 4.5))
    else:
        fig = ax.figure
    vals = np.asarray(values, dtype=np.float64)
    im = ax.imshow(vals, aspect="auto", interpolation="nearest",
                   cmap="Greys", vmin=0.0, vmax=1.0)
    ax.set_xlabel("parasites")
    ax.set_ylabel("hosts")
    ax.grid(False)
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, shrink=0.8)
    return fig


def plot_murphy(curves: dict):
    """Elementary-score curves over the threshold grid, one line per model."""
    apply_style()
    fig, ax = plt.subplots()
    for name, curve in curves.items():
        ax.plot(curve.thetas, curve.scores, label=name, linewidth=1.4)
    ax.set_xlabel("threshold")
    ax.set_ylabel("mean elementary score")
    ax.legend()
    return fig


def plot_roc(curves: dict):
    """Vertically averaged ROC curves with the chance diagonal."""
    apply_style()
    fig, ax = plt.subplots(figsize=(5.0, 4.6))
    ax.plot([0, 1], [0, 1], color="0.6", linestyle="--", linewidth=1.0)
    for name, curve in curves.items():
        ax.plot(curve.fpr, curve.tpr, linewidth=1.4,
                label=f"{name} (area {curve.auc:.3f})")
        ax.plot([curve.best_fpr], [curve.best_tpr], "o", markersize=4, color="k")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.legend(loc="lower right")
    return fig


def plot_top_x(series: dict):
    """Recovered fraction of held-out links among the top-x ranked cells."""
    apply_style()
    fig, ax = plt.subplots()
    for name, (xs, frac) in series.items():
        ax.plot(xs, frac, linewidth=1.4, label=name)
    ax.set_xlabel("cells inspected")
    ax.set_ylabel("fraction recovered")
    ax.set_ylim(0.0, 1.02)
    ax.legend(loc="lower right")
    return fig


def plot_trace(series: dict, max_panels: int = 6):
    """Small-multiple trace plots for a handful of scalar parameters."""
    apply_style()
    names = list(series)[:max_panels]
    n = max(len(names), 1)
    fig, axes = plt.subplots(n, 1, figsize=(6.5, 1.8 * n), sharex=True, squeeze=False)
    for ax, name in zip(axes[:, 0], names):
        x = np.asarray(series[name])
        ax.plot(np.arange(x.size), x, linewidth=0.8)
        ax.set_ylabel(name, fontsize=8)
    axes[-1, 0].set_xlabel("recorded sweep")
    fig.tight_layout()
    return fig
