"""Report rendering: JSON/JSONL writers and matplotlib figures.

Figures always go to files (Agg backend); nothing ever opens a window.
"""

from __future__ import annotations

import json
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_jsonl(path, rows):
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return path


def write_history_text(path, history):
    """One line per epoch: epoch, interaction, feature, total, seconds."""
    with open(path, "w") as fh:
        fh.write("# epoch interaction feature total seconds\n")
        for row in history.rows():
            fh.write(f"{row['epoch']} {row['interaction']:.6f} {row['feature']:.6f} "
                     f"{row['total']:.6f} {row['seconds']:.4f}\n")
    return path


def _new_fig(width=6.4, height=4.2):
    fig, ax = plt.subplots(figsize=(width, height))
    return fig, ax


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_training_curves(history, path):
    fig, ax = _new_fig()
    epochs = np.arange(len(history.total))
    ax.plot(epochs, history.interaction, label="interaction", lw=1.4)
    ax.plot(epochs, history.feature, label="feature (per pair)", lw=1.4)
    ax.plot(epochs, history.total, label="total objective", lw=1.4, ls="--", color="k")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend(frameon=False)
    ax.set_title("training objectives")
    return _save(fig, path)


def _project_2d(h):
    """PCA projection via SVD; pads 1-D embeddings with zeros."""
    centered = h - h.mean(axis=0)
    if h.shape[1] == 1:
        return np.hstack([centered, np.zeros_like(centered)])
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    return centered @ vt[:2].T


def render_cluster_scatter(h_po, hard, neutral, irrelevant, path):
    xy = _project_2d(np.asarray(h_po))
    fig, ax = _new_fig(5.6, 5.2)
    plain = ~(neutral | irrelevant)
    for side, color in ((0, "tab:blue"), (1, "tab:red")):
        sel = plain & (hard == side)
        ax.scatter(xy[sel, 0], xy[sel, 1], s=9, c=color, label=f"group {side}", alpha=0.75)
    if neutral.any():
        ax.scatter(xy[neutral, 0], xy[neutral, 1], s=9, c="0.55", label="neutral", alpha=0.7)
    if irrelevant.any():
        ax.scatter(xy[irrelevant, 0], xy[irrelevant, 1], s=14, c="k", marker="x",
                   label="irrelevant")
    ax.set_xlabel("pc 1")
    ax.set_ylabel("pc 2")
    ax.legend(frameon=False, fontsize=8)
    ax.set_title("polarized embedding, 2-d projection")
    return _save(fig, path)


def render_index_bars(reports, path):
    """reports: dict variant name -> report dict with P, D, normalized."""
    fig, ax = _new_fig(5.2, 4.0)
    names = list(reports)
    vals = [reports[n]["normalized"] for n in names]
    ax.bar(names, vals, color=["tab:blue", "tab:orange"][:len(names)], width=0.5)
    for i, v in enumerate(vals):
        ax.text(i, v + 0.01, f"{v:.3f}", ha="center", fontsize=9)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("normalized index")
    ax.set_title("polarization indices")
    return _save(fig, path)


def render_eval_bars(rows, path):
    """rows: list of dicts with variant, mean_accuracy, std_accuracy."""
    fig, ax = _new_fig(7.0, 4.2)
    names = [r["variant"] for r in rows]
    means = [r["mean_accuracy"] for r in rows]
    stds = [r["std_accuracy"] for r in rows]
    ax.bar(range(len(names)), means, yerr=stds, capsize=3, color="tab:blue")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("clustering accuracy")
    ax.set_ylim(0, 1.05)
    ax.set_title("evaluation suite")
    return _save(fig, path)


def render_prompt_curve(history, path):
    fig, ax = _new_fig(5.2, 3.8)
    epochs = [r["epoch"] for r in history]
    acc = [r["accuracy"] for r in history]
    ax.plot(epochs, acc, marker="o", ms=3)
    ax.set_xlabel("epoch")
    ax.set_ylabel("nearest-prompt accuracy")
    ax.set_ylim(0, 1.05)
    ax.set_title("prompt tuning")
    return _save(fig, path)
