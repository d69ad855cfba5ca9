"""Report figures. Every function writes one file and returns its path."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_utterance(
    path,
    similarity: np.ndarray,
    norms: np.ndarray,
    threshold: float,
    pred_frames: Sequence[int] = (),
    ref_frames: Sequence[int] = (),
    title: str = "",
) -> Path:
    """Similarity matrix over the frame-norm curve, with boundary lines.

    Reference boundaries are white dotted lines, predicted ones red.
    """
    with plt.rc_context(_RC):
        fig, (ax_s, ax_n) = plt.subplots(
            2, 1, figsize=(4.5, 5.6), gridspec_kw={"height_ratios": [4, 1]}, sharex=True
        )
        t = len(norms)
        ax_s.imshow(similarity, cmap="viridis", origin="upper", extent=(0, t, t, 0), aspect="auto")
        for f in ref_frames:
            ax_s.axvline(f, color="white", ls=":", lw=0.8)
            ax_s.axhline(f, color="white", ls=":", lw=0.8)
        for f in pred_frames:
            ax_s.axvline(f, color="red", ls=":", lw=0.8)
            ax_s.axhline(f, color="red", ls=":", lw=0.8)
        ax_s.set_ylabel("frame")
        if title:
            ax_s.set_title(title)
        ax_n.plot(np.arange(t) + 0.5, norms, color="k", lw=0.8)
        ax_n.axhline(threshold, color="tab:orange", lw=0.8, label="threshold")
        for f in pred_frames:
            ax_n.axvline(f, color="red", ls=":", lw=0.8)
        ax_n.set_xlabel("frame")
        ax_n.set_ylabel("norm")
        ax_n.set_xlim(0, t)
        ax_n.legend(loc="upper right", frameon=False)
        return _save(fig, path)


def plot_metrics(path, columns: dict[str, float], title: str = "Segmentation and clustering") -> Path:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 2.8))
        names = list(columns)
        vals = [100 * columns[n] for n in names]
        bars = ax.bar(names, vals, color="tab:blue")
        for b, v in zip(bars, vals):
            ax.text(b.get_x() + b.get_width() / 2, v + 1, f"{v:.1f}", ha="center", va="bottom", fontsize=7)
        ax.set_ylim(0, 110)
        ax.set_ylabel("%")
        ax.set_title(title)
        return _save(fig, path)


def plot_contingency(path, contingency: dict, matching: Sequence[tuple], max_items: int = 40) -> Path:
    """Overlap counts, rows ordered by matched syllable so a good result shows a diagonal."""
    units = sorted({u for u, _ in contingency})
    labels = sorted({s for _, s in contingency})
    match = dict(matching)
    order_l = [match[u] for u in units if u in match]
    order_l += [s for s in labels if s not in order_l]
    order_u = [u for u in units if u in match] + [u for u in units if u not in match]
    order_u, order_l = order_u[:max_items], order_l[:max_items]
    mat = np.zeros((len(order_u), len(order_l)))
    for i, u in enumerate(order_u):
        for j, s in enumerate(order_l):
            mat[i, j] = contingency.get((u, s), 0)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 4.5))
        im = ax.imshow(mat, cmap="Greys", aspect="auto")
        ax.set_xticks(range(len(order_l)))
        ax.set_xticklabels(order_l, rotation=90, fontsize=6)
        ax.set_yticks(range(len(order_u)))
        ax.set_yticklabels([str(u) for u in order_u], fontsize=6)
        ax.set_xlabel("syllable")
        ax.set_ylabel("unit")
        fig.colorbar(im, ax=ax, label="overlap frames")
        return _save(fig, path)


def plot_scaling(path, rows) -> Path:
    """Log-log runtime against frame count for each timed path."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        for name, style in (("per_segment", "o-"), ("global", "s--")):
            sel = sorted((r.num_frames, r.seconds) for r in rows if r.path == name)
            if sel:
                x, y = zip(*sel)
                ax.loglog(x, y, style, label=name.replace("_", "-"))
        ax.set_xlabel("frames N")
        ax.set_ylabel("seconds")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_training(path, log: Sequence[dict], n_classes: int | None = None) -> Path:
    steps = [r["step"] for r in log]
    with plt.rc_context(_RC):
        fig, (ax_l, ax_h) = plt.subplots(2, 1, figsize=(4.5, 4.2), sharex=True)
        ax_l.plot(steps, [r["loss"] for r in log], lw=0.9)
        ax_l.set_ylabel("loss")
        ax_h.plot(steps, [r["teacher_entropy"] for r in log], lw=0.9, label="teacher entropy")
        if n_classes:
            ax_h.axhline(0.1 * math.log(n_classes), color="tab:red", ls=":", lw=0.8, label="0.1 ln C")
        ax_h.set_ylabel("nats")
        ax_h.set_xlabel("step")
        ax_h.legend(frameon=False)
        return _save(fig, path)


def plot_ssabx(path, overall: float, per_band: dict[str, float]) -> Path:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(3.8, 2.8))
        names = list(per_band) + ["all"]
        vals = [100 * per_band[b] for b in per_band] + [100 * overall]
        ax.bar(names, vals, color=["tab:gray"] * len(per_band) + ["tab:blue"])
        ax.axhline(50, color="k", ls=":", lw=0.8)
        ax.set_ylim(0, 100)
        ax.set_ylabel("accuracy %")
        return _save(fig, path)
