"""Headless figures: field comparisons and training curves."""

import os
from typing import Dict, List, Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

QOI_UNITS = {"pressure": "bar", "saturation": "-"}


def plot_field_comparison(truth: np.ndarray, pred: np.ndarray, qoi: str,
                          path: str, title: str = "") -> str:
    """Truth and prediction on one shared color scale, plus the error map."""
    if truth.shape != pred.shape or truth.ndim != 2:
        raise ValueError(f"expected matching 2-D fields, got {truth.shape} "
                         f"and {pred.shape}")
    units = QOI_UNITS.get(qoi, "")
    vmin = float(min(truth.min(), pred.min()))
    vmax = float(max(truth.max(), pred.max()))
    error = np.abs(pred - truth)

    fig, axes = plt.subplots(1, 3, figsize=(12, 3.6), constrained_layout=True)
    for ax, (data, name, lo, hi, cmap) in zip(axes, [
        (truth, "ground truth", vmin, vmax, "viridis"),
        (pred, "prediction", vmin, vmax, "viridis"),
        (error, "absolute error", 0.0, float(error.max()) or 1e-12, "magma"),
    ]):
        im = ax.imshow(data.T, origin="lower", vmin=lo, vmax=hi, cmap=cmap)
        ax.set_title(f"{name} [{units}]" if units else name)
        ax.set_xticks([])
        ax.set_yticks([])
        fig.colorbar(im, ax=ax, shrink=0.85)
    if title:
        fig.suptitle(title)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_training_history(histories: List[Dict], qoi: str, path: str) -> Optional[str]:
    """Per-round train/val loss curves on one log-scaled axis."""
    fig, ax = plt.subplots(figsize=(7, 4), constrained_layout=True)
    drew = False
    for record in histories:
        epochs = [h["epoch"] for h in record["history"]]
        if not epochs:
            continue
        drew = True
        label = f"round {record['round']}"
        ax.plot(epochs, [h["train_loss"] for h in record["history"]],
                label=f"{label} train")
        ax.plot(epochs, [h["val_loss"] for h in record["history"]],
                linestyle="--", label=f"{label} val")
    if not drew:
        plt.close(fig)
        return None
    ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title(f"{qoi} training")
    ax.legend(fontsize=8)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
