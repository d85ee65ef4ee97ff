"""Run reports: deterministic JSON/CSV plus rendered matplotlib figures."""

from __future__ import annotations

import csv
import json

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.colors import ListedColormap

from .engine import CdclHistory
from .hsi import LabelMap

# fixed class palette (index 0 = unlabeled, then classes 1..16, cycled beyond)
PALETTE = [
    "#000000",
    "#c0c0c0", "#00ff00", "#00ffff", "#008000",
    "#ff00ff", "#a55229", "#800080", "#0000ff",
    "#ff6400", "#ffff00", "#64b4ff", "#ffa0a0",
    "#00acfe", "#abaf50", "#3d5b70", "#65c13c",
]


def write_json(payload: dict, path: str) -> None:
    """Canonical JSON: sorted keys, fixed separators, trailing newline."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def write_metrics_csv(rows: list[dict], path: str) -> None:
    """One row per trial: trial, seed, oa, aa, kappa."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["trial", "seed", "oa", "aa", "kappa"])
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in writer.fieldnames})


def label_map_colors(classes: int) -> ListedColormap:
    colors = [PALETTE[0]] + [PALETTE[1 + (c % (len(PALETTE) - 1))] for c in range(classes)]
    return ListedColormap(colors)


def render_label_map(labels: LabelMap, path: str, title: str | None = None) -> None:
    """Classification map as a PNG with the fixed palette."""
    classes = labels.class_count()
    fig, ax = plt.subplots(figsize=(6, 6 * labels.height / max(labels.width, 1)))
    ax.imshow(
        labels.grid(),
        cmap=label_map_colors(max(classes, 1)),
        vmin=0,
        vmax=max(classes, 1),
        interpolation="nearest",
    )
    ax.set_axis_off()
    if title:
        ax.set_title(title)
    fig.savefig(path, bbox_inches="tight", dpi=150)
    plt.close(fig)


def render_history(history: CdclHistory, path: str) -> None:
    """Training-set and cluster growth per iteration, plus test accuracy."""
    iters = [r.iteration for r in history.records]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(iters, [r.ts_size for r in history.records], marker="o", label="training set")
    ax.plot(iters, [r.tc_total for r in history.records], marker="s", label="target clusters")
    ax.set_xlabel("iteration")
    ax.set_ylabel("pixels")
    oa = [r.test_oa for r in history.records]
    if any(v is not None for v in oa):
        twin = ax.twinx()
        twin.plot(iters, oa, color="tab:red", marker="^", label="test OA")
        twin.set_ylabel("overall accuracy")
        twin.set_ylim(0.0, 1.0)
    ax.legend(loc="upper left")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def history_oa_table(history: CdclHistory) -> list[list]:
    return [[r.iteration, r.ts_size, r.tc_total, r.test_oa] for r in history.records]


def summarize_trials(oas: list[float], aas: list[float], kappas: list[float]) -> dict:
    def stats(vals: list[float]) -> dict:
        arr = np.asarray(vals, dtype=np.float64)
        return {"mean": float(arr.mean()), "std": float(arr.std(ddof=0))}

    return {"oa": stats(oas), "aa": stats(aas), "kappa": stats(kappas)}
