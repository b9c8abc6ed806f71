"""Report figures written next to the JSON/CSV score files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from affectfusion import DIMENSIONS  # noqa: E402

# PNG metadata without version strings keeps reruns byte-identical
_PNG_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_score_report(gold: np.ndarray, pred: np.ndarray, report, path, title: str = "") -> Path:
    """Gold vs predicted traces (pooled) and a scatter per emotion dimension."""
    fig, axes = plt.subplots(3, 2, figsize=(10, 8), gridspec_kw={"width_ratios": [3, 1]})
    idx = np.arange(len(gold))
    for j, d in enumerate(DIMENSIONS):
        s = report.scores[d]
        ax = axes[j, 0]
        ax.plot(idx, gold[:, j], lw=0.8, color="k", label="gold")
        ax.plot(idx, pred[:, j], lw=0.8, color="tab:red", alpha=0.8, label="predicted")
        ax.set_ylim(-1.05, 1.05)
        ax.set_ylabel(d)
        ax.set_title(f"CCC {s.ccc:.3f}  r {s.pearson:.3f}  RMSE {s.rmse:.3f}", fontsize=9)
        if j == 0:
            ax.legend(loc="upper right", fontsize=8, frameon=False)
        sc = axes[j, 1]
        sc.scatter(gold[:, j], pred[:, j], s=2, alpha=0.4, color="tab:blue")
        sc.plot([-1, 1], [-1, 1], lw=0.8, color="grey", ls="--")
        sc.set_xlim(-1.05, 1.05)
        sc.set_ylim(-1.05, 1.05)
        sc.set_aspect("equal")
    axes[-1, 0].set_xlabel("pooled sample")
    axes[-1, 1].set_xlabel("gold")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_fusion_weights(weights, scores: dict, single: dict, path) -> Path:
    """Stacked per-dimension weight bars plus fused vs single-modality dev CCC."""
    mods = list(weights.modalities)
    fig, (ax_w, ax_c) = plt.subplots(1, 2, figsize=(10, 4))
    x = np.arange(len(DIMENSIONS))
    bottom = np.zeros(len(DIMENSIONS))
    for i, m in enumerate(mods):
        h = np.array([weights.weights[d][i] for d in DIMENSIONS])
        ax_w.bar(x, h, bottom=bottom, label=m)
        bottom += h
    ax_w.set_xticks(x, DIMENSIONS)
    ax_w.set_ylabel("weight")
    ax_w.set_ylim(0, 1)
    ax_w.legend(fontsize=8, frameon=False)
    width = 0.8 / (len(mods) + 1)
    for i, m in enumerate(mods):
        ax_c.bar(x + i * width, [single[m][d] for d in DIMENSIONS], width, label=m)
    ax_c.bar(x + len(mods) * width, [scores[d] for d in DIMENSIONS], width, color="k", label="fused")
    ax_c.set_xticks(x + 0.4 - width / 2, DIMENSIONS)
    ax_c.set_ylabel("dev CCC")
    ax_c.axhline(0, color="grey", lw=0.5)
    ax_c.legend(fontsize=8, frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def plot_training_log(report, path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ep = np.arange(1, len(report.train_mse) + 1)
    ax.plot(ep, report.train_mse, color="tab:blue", label="train MSE")
    ax.set_xlabel("epoch")
    ax.set_ylabel("train MSE")
    ax2 = ax.twinx()
    ax2.plot(ep, report.dev_ccc, color="tab:red", label="dev CCC")
    ax2.axvline(report.selected_epoch, color="grey", ls=":", lw=0.8)
    ax2.set_ylabel("dev CCC")
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    return _save(fig, path)
