"""Figure rendering for the report paths.

All functions write PNG files next to the delimited outputs; rendering
uses the Agg backend so the CLI works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_match_curves(path, match_a, match_b, label_a, label_b, p_value=None):
    """Per-run Match values for two methods on a shared run axis."""
    match_a = np.asarray(match_a, dtype=float)
    match_b = np.asarray(match_b, dtype=float)
    runs = np.arange(1, match_a.size + 1)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(runs, match_a, "o-", label=f"{label_a} (mean {match_a.mean():.3f})")
    ax.plot(runs, match_b, "s-", label=f"{label_b} (mean {match_b.mean():.3f})")
    ax.set_xlabel("run")
    ax.set_ylabel("Match")
    ax.set_ylim(0.0, 1.05)
    title = "Match per run"
    if p_value is not None and np.isfinite(p_value):
        title += f" (Welch p = {p_value:.3g})"
    ax.set_title(title)
    ax.legend(loc="lower right")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_objective_traces(path, traces, labels=None):
    """Objective value per EM iteration, one curve per extracted source."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for idx, trace in enumerate(traces):
        trace = np.asarray(trace, dtype=float)
        label = labels[idx] if labels else f"source {idx + 1}"
        ax.plot(np.arange(trace.size), trace, label=label)
    ax.set_xlabel("EM iteration")
    ax.set_ylabel("objective")
    ax.set_title("Objective trace per source")
    ax.legend(loc="lower right", fontsize="small")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_image_montage(path, panels: dict):
    """Grid of grayscale images: one row per stage, one column per signal.

    ``panels`` maps a row label to a list of 2-D arrays.
    """
    n_rows = len(panels)
    n_cols = max(len(images) for images in panels.values())
    fig, axes = plt.subplots(
        n_rows, n_cols, figsize=(2.4 * n_cols, 2.4 * n_rows), squeeze=False
    )
    for r, (label, images) in enumerate(panels.items()):
        for c in range(n_cols):
            ax = axes[r][c]
            ax.set_xticks([])
            ax.set_yticks([])
            if c < len(images):
                ax.imshow(np.asarray(images[c], dtype=float), cmap="gray")
            else:
                ax.axis("off")
            if c == 0:
                ax.set_ylabel(label, fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
