"""Matplotlib figures written next to the CSV/JSON reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# Fixed hash salt and no date stamp keep SVG output byte-identical across runs.
matplotlib.rcParams["svg.hashsalt"] = "splatuq"


def save_fig(fig, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    metadata = {"Date": None} if path.suffix.lower() in (".svg", ".pdf") else {}
    if path.suffix.lower() == ".png":
        metadata = {"Software": None}
    fig.savefig(path, bbox_inches="tight", metadata=metadata)
    plt.close(fig)


def sparsification_plot(path, fractions, mae_uncertainty, mae_oracle, label="uncertainty", title=None):
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.plot(fractions, mae_uncertainty, label=f"removed by {label}", color="tab:blue")
    ax.plot(fractions, mae_oracle, label="removed by error (oracle)", color="tab:gray", linestyle="--")
    ax.set_xlabel("fraction of pixels removed")
    ax.set_ylabel("normalized MAE of remaining pixels")
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(bottom=0.0)
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    save_fig(fig, path)


def uncertainty_strip(path, maps, titles=None):
    """Side-by-side uncertainty maps on a shared [0, 1] color scale."""
    n = len(maps)
    fig, axes = plt.subplots(1, n, figsize=(2.2 * n, 2.4), squeeze=False)
    for i, (ax, m) in enumerate(zip(axes[0], maps)):
        im = ax.imshow(m, cmap="inferno", vmin=0.0, vmax=1.0)
        ax.set_axis_off()
        if titles:
            ax.set_title(titles[i], fontsize=8)
    fig.colorbar(im, ax=list(axes[0]), shrink=0.8)
    save_fig(fig, path)
