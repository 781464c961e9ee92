"""Matplotlib figures written straight to files (Agg backend, no display needed)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps PNG bytes stable across runs
_META = {"Software": None}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def plot_success_rates(report, path: str | Path, min_rate: float | None = None) -> Path:
    """Horizontal bars of per-task success rate, seen tasks in one colour and unseen in another."""
    rows = [r for r in report.rows if r.trials]
    fig, ax = plt.subplots(figsize=(7, 0.4 * max(len(rows), 1) + 1.2))
    y = np.arange(len(rows))
    rates = [r.success_rate for r in rows]
    colors = ["tab:blue" if r.seen else "tab:orange" for r in rows]
    ax.barh(y, rates, color=colors)
    ax.set_yticks(y, [r.name for r in rows], fontsize=8)
    ax.invert_yaxis()
    ax.set_xlim(0, 1)
    ax.set_xlabel("success rate")
    if min_rate is not None:
        ax.axvline(min_rate, color="k", ls="--", lw=1)
    handles = [plt.Rectangle((0, 0), 1, 1, color=c) for c in ("tab:blue", "tab:orange")]
    ax.legend(handles, ["seen", "unseen"], loc="lower right", fontsize=8)
    ax.set_title(f"{report.trials} trials per task, seed {report.seed}")
    fig.tight_layout()
    return _save(fig, path)


def plot_error_hist(report, path: str | Path, threshold: float) -> Path:
    """Distribution of final mean particle error over all trials."""
    errs = np.array([t.error for t in report.trial_results])
    fig, ax = plt.subplots(figsize=(6, 3.5))
    if errs.size:
        ax.hist(errs, bins=40, color="tab:gray")
    ax.axvline(threshold, color="tab:red", lw=1)
    ax.set_xlabel("mean particle error (m)")
    ax.set_ylabel("trials")
    fig.tight_layout()
    return _save(fig, path)


def plot_episode(trace, path: str | Path, title: str = "") -> Path:
    """One panel per step: the observation with the predicted pick (x) and place (o) pixels."""
    n = max(len(trace.records), 1)
    cols = min(n, 4)
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(3 * cols, 3 * rows), squeeze=False)
    for ax in axes.flat:
        ax.axis("off")
    for k, rec in enumerate(trace.records):
        ax = axes.flat[k]
        ax.imshow(trace.observations[rec.observation], cmap="viridis_r")
        ax.plot(*rec.pick_pixel, "rx", ms=8, mew=2)
        ax.plot(*rec.place_pixel, "wo", ms=7, mfc="none", mew=2)
        ax.set_title(f"{k + 1}: {rec.pick.split(' of ')[0][12:]} -> {rec.place[15:]}", fontsize=7)
    if title:
        fig.suptitle(title, fontsize=9)
    fig.tight_layout()
    return _save(fig, path)


def plot_depth(depth: np.ndarray, path: str | Path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(4, 4))
    im = ax.imshow(depth, cmap="viridis_r")
    fig.colorbar(im, ax=ax, label="depth (m)", shrink=0.8)
    ax.axis("off")
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    return _save(fig, path)


def plot_training(rows: list[dict], path: str | Path) -> Path:
    """Training loss and held-out argmax accuracy per epoch."""
    ep = [r["epoch"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(ep, [r["train_loss"] for r in rows], "tab:blue")
    ax.set_xlabel("epoch")
    ax.set_ylabel("train loss", color="tab:blue")
    acc = [r["holdout_argmax_acc"] for r in rows]
    if any(a is not None for a in acc):
        ax2 = ax.twinx()
        ax2.plot(ep, [np.nan if a is None else a for a in acc], "tab:green")
        ax2.set_ylim(0, 1)
        ax2.set_ylabel("held-out accuracy", color="tab:green")
    fig.tight_layout()
    return _save(fig, path)
