"""Static SVG figures for generated-vs-training comparisons."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["scatter_compare", "loss_curve"]


def scatter_compare(train_pts: np.ndarray, gen_pts: np.ndarray, path,
                    title: str = "") -> None:
    """Side-by-side 2-D scatter of training points and generated points.

    Inputs are (n, 2) arrays: column 0 on the horizontal axis, column 1 on
    the vertical axis.
    """
    train_pts = np.asarray(train_pts, dtype=np.float64)
    gen_pts = np.asarray(gen_pts, dtype=np.float64)
    fig, axes = plt.subplots(1, 2, figsize=(8, 4), sharex=True, sharey=True)
    for ax, pts, label in ((axes[0], train_pts, "training"),
                           (axes[1], gen_pts, "generated")):
        ax.scatter(pts[:, 0], pts[:, 1], s=2, alpha=0.4, linewidths=0)
        ax.set_title(label)
        ax.set_aspect("equal", adjustable="box")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def loss_curve(losses, path, title: str = "training loss") -> None:
    losses = np.asarray(losses, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(np.arange(1, losses.size + 1), losses)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean batch loss")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
