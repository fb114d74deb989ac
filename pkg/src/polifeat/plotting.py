"""Report figures.  Everything renders off-screen with the Agg backend and is
saved without the version-stamped PNG metadata, so reruns give identical files."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 3.7),
    "figure.dpi": 100,
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.bbox": "tight",
}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_history(rows: Sequence[dict], path, title: str = "training") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        epochs = [int(r["epoch"]) for r in rows]
        ax.plot(epochs, [float(r["loss"]) for r in rows], color="k", lw=1.2, label="train loss")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        val = [r.get("val_metric") for r in rows]
        if any(v not in (None, "") for v in val):
            ax2 = ax.twinx()
            ax2.plot(epochs, [float(v) if v not in (None, "") else np.nan for v in val],
                     color="tab:blue", lw=1.0, label="validation metric")
            ax2.set_ylabel("validation metric", color="tab:blue")
        ax.set_title(title)
        return _save(fig, path)


def plot_importance(rows: Sequence[dict], path) -> Path:
    rows = sorted(rows, key=lambda r: float(r["importance"]))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 0.3 * len(rows) + 1.2))
        y = np.arange(len(rows))
        colors = ["tab:orange" if r["kind"] == "edge" else "tab:blue" for r in rows]
        ax.barh(y, [float(r["importance"]) for r in rows], xerr=[float(r["std"]) for r in rows],
                color=colors, ecolor="0.3", capsize=2)
        ax.set_yticks(y, [f'{r["feature"]} ({r["kind"]})' for r in rows])
        ax.axvline(0, color="0.5", lw=0.8)
        ax.set_xlabel("metric drop when shuffled")
        ax.set_title("permutation importance")
        return _save(fig, path)


def plot_influence(W, path, title: str = "estimated influence W[source, target]") -> Path:
    W = np.asarray(W, dtype=np.float64)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.6))
        im = ax.imshow(W, cmap="Greys", vmin=0)
        fig.colorbar(im, ax=ax, shrink=0.8)
        ax.set_xlabel("target node")
        ax.set_ylabel("source node")
        ax.set_title(title)
        return _save(fig, path)


def plot_ranking(rows: Sequence[dict], path, title: str, value: str = "delta") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        labels = [str(r["action"]) for r in rows]
        ax.bar(range(len(rows)), [float(r[value]) for r in rows], color="0.35")
        ax.set_xticks(range(len(rows)), labels, rotation=60, ha="right")
        ax.set_ylabel(value)
        ax.set_title(title)
        return _save(fig, path)
